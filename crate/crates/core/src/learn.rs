//! Learned split-ratio predictor: a feed-forward network maps a window of
//! recent demand matrices to one weight per routing path; per-pair
//! normalization turns the weights into split ratios. Training descends the
//! realized maximum utilization through its active link (a subgradient,
//! since the max is piecewise linear) with Adam updates.

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::demand::DemandMatrix;
use crate::error::{Error, Result};
use crate::pathing::PathSet;
use crate::te::{PathSetView, RatioConfig};
use crate::topology::Topology;

const HIDDEN: [usize; 4] = [128, 128, 128, 128];
const CHECKPOINT_VERSION: u32 = 1;

/// Fully connected network with ReLU hidden layers and a sigmoid output,
/// all in f64. Input is `history * n * (n - 1)` demand entries; output is
/// one raw weight per routing path of the path set it was built for.
#[derive(Debug, Clone, PartialEq)]
pub struct PredictorModel {
    history: usize,
    num_nodes: usize,
    /// Layer sizes from input to output.
    arch: Vec<usize>,
    /// Row-major `out x in` weight matrices, one per layer.
    weights: Vec<Vec<f64>>,
    biases: Vec<Vec<f64>>,
}

fn sigmoid(z: f64) -> f64 {
    1.0 / (1.0 + (-z).exp())
}

impl PredictorModel {
    /// Fresh model for `ps` with uniform fan-in initialization: every weight
    /// and bias of a layer with `fan_in` inputs is drawn from
    /// `U[-1/sqrt(fan_in), 1/sqrt(fan_in)]`.
    pub fn new(ps: &PathSet, history: usize, seed: u64) -> Result<Self> {
        if history == 0 {
            return Err(Error::Dimension("history window must be positive".into()));
        }
        let n = ps.num_nodes();
        let input = history * n * (n - 1);
        let output = ps.total_routing_paths();
        if output == 0 {
            return Err(Error::Dimension("path set has no routing paths".into()));
        }
        let mut arch = vec![input];
        arch.extend_from_slice(&HIDDEN);
        arch.push(output);
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut weights = Vec::new();
        let mut biases = Vec::new();
        for l in 1..arch.len() {
            let fan_in = arch[l - 1];
            let bound = 1.0 / (fan_in as f64).sqrt();
            let mut draw = || -> f64 { bound * (2.0 * rng.random::<f64>() - 1.0) };
            weights.push((0..arch[l] * fan_in).map(|_| draw()).collect());
            biases.push((0..arch[l]).map(|_| draw()).collect());
        }
        Ok(PredictorModel {
            history,
            num_nodes: n,
            arch,
            weights,
            biases,
        })
    }

    pub fn history(&self) -> usize {
        self.history
    }

    pub fn num_nodes(&self) -> usize {
        self.num_nodes
    }

    pub fn input_dim(&self) -> usize {
        self.arch[0]
    }

    pub fn output_dim(&self) -> usize {
        *self.arch.last().unwrap()
    }

    pub fn num_params(&self) -> usize {
        self.weights.iter().map(Vec::len).sum::<usize>()
            + self.biases.iter().map(Vec::len).sum::<usize>()
    }

    /// Flattens a demand window (oldest first) into the network input,
    /// scaled by the window's largest entry for conditioning.
    pub fn input_from_window(&self, window: &[&DemandMatrix]) -> Result<Vec<f64>> {
        if window.len() != self.history {
            return Err(Error::Dimension(format!(
                "window has {} matrices, model expects {}",
                window.len(),
                self.history
            )));
        }
        let mut input = Vec::with_capacity(self.input_dim());
        for m in window {
            if m.n() != self.num_nodes {
                return Err(Error::Dimension(format!(
                    "window matrix is {}x{}, model expects {} nodes",
                    m.n(),
                    m.n(),
                    self.num_nodes
                )));
            }
            input.extend(m.pair_vector());
        }
        let peak = input.iter().fold(0.0_f64, |a, &b| a.max(b));
        if peak > 0.0 {
            for v in &mut input {
                *v /= peak;
            }
        }
        Ok(input)
    }

    /// Raw per-path weights in (0, 1), one forward pass.
    pub fn forward(&self, input: &[f64]) -> Result<Vec<f64>> {
        Ok(self.forward_trace(input)?.pop().unwrap())
    }

    /// Activations of every layer (input first, output last).
    fn forward_trace(&self, input: &[f64]) -> Result<Vec<Vec<f64>>> {
        if input.len() != self.input_dim() {
            return Err(Error::Dimension(format!(
                "input has {} entries, model expects {}",
                input.len(),
                self.input_dim()
            )));
        }
        let depth = self.weights.len();
        let mut acts = Vec::with_capacity(depth + 1);
        acts.push(input.to_vec());
        for l in 0..depth {
            let (rows, cols) = (self.arch[l + 1], self.arch[l]);
            let x = acts.last().unwrap();
            let mut out = Vec::with_capacity(rows);
            for r in 0..rows {
                let row = &self.weights[l][r * cols..(r + 1) * cols];
                let z = self.biases[l][r]
                    + row.iter().zip(x).map(|(w, v)| w * v).sum::<f64>();
                out.push(if l + 1 == depth {
                    sigmoid(z)
                } else {
                    z.max(0.0)
                });
            }
            acts.push(out);
        }
        Ok(acts)
    }

    /// Predicted split ratios for the next epoch given the demand window:
    /// forward pass, then per-pair normalization of the raw weights (a pair
    /// whose weights sum to zero falls back to an even split).
    pub fn predict(&self, ps: &PathSet, window: &[&DemandMatrix]) -> Result<RatioConfig> {
        let raw = self.forward(&self.input_from_window(window)?)?;
        weights_to_ratios(ps, &raw)
    }

    pub fn to_json(&self) -> String {
        let file = Checkpoint {
            version: CHECKPOINT_VERSION,
            history: self.history,
            num_nodes: self.num_nodes,
            arch: self.arch.clone(),
            weights: self.weights.clone(),
            biases: self.biases.clone(),
        };
        serde_json::to_string(&file).expect("model serializes")
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let file: Checkpoint = serde_json::from_str(text)?;
        if file.version != CHECKPOINT_VERSION {
            return Err(Error::Dimension(format!(
                "checkpoint version {} unsupported (expected {CHECKPOINT_VERSION})",
                file.version
            )));
        }
        if file.arch.len() < 2 || file.arch.first() != Some(&(file.history * file.num_nodes * (file.num_nodes - 1))) {
            return Err(Error::Dimension("checkpoint architecture is inconsistent".into()));
        }
        let layers = file.arch.len() - 1;
        if file.weights.len() != layers || file.biases.len() != layers {
            return Err(Error::Dimension("checkpoint layer count mismatch".into()));
        }
        for l in 0..layers {
            if file.weights[l].len() != file.arch[l + 1] * file.arch[l]
                || file.biases[l].len() != file.arch[l + 1]
            {
                return Err(Error::Dimension(format!(
                    "checkpoint layer {l} has wrong dimensions"
                )));
            }
        }
        Ok(PredictorModel {
            history: file.history,
            num_nodes: file.num_nodes,
            arch: file.arch,
            weights: file.weights,
            biases: file.biases,
        })
    }
}

#[derive(Serialize, Deserialize)]
struct Checkpoint {
    version: u32,
    history: usize,
    num_nodes: usize,
    arch: Vec<usize>,
    weights: Vec<Vec<f64>>,
    biases: Vec<Vec<f64>>,
}

/// Per-pair normalization of raw path weights into a valid ratio
/// configuration.
pub fn weights_to_ratios(ps: &PathSet, raw: &[f64]) -> Result<RatioConfig> {
    let offsets = ps.flat_offsets();
    if raw.len() != *offsets.last().unwrap() {
        return Err(Error::Dimension(format!(
            "weight vector has {} entries, path set has {} paths",
            raw.len(),
            offsets.last().unwrap()
        )));
    }
    if raw.iter().any(|w| !w.is_finite() || *w < 0.0) {
        return Err(Error::Dimension(
            "path weights must be finite and nonnegative".into(),
        ));
    }
    let mut flat = vec![0.0; raw.len()];
    for pair in 0..ps.num_pairs() {
        let slice = &raw[offsets[pair]..offsets[pair + 1]];
        let sum: f64 = slice.iter().sum();
        let m = slice.len();
        for (i, &w) in slice.iter().enumerate() {
            flat[offsets[pair] + i] = if sum > 0.0 { w / sum } else { 1.0 / m as f64 };
        }
    }
    RatioConfig::from_flat(ps, &flat)
}

/// Training hyperparameters.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TrainConfig {
    pub epochs: usize,
    pub learning_rate: f64,
    /// Shuffling seed (model initialization has its own seed).
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            epochs: 30,
            learning_rate: 1e-3,
            seed: 0,
        }
    }
}

/// Per-epoch mean utilization during training.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TrainReport {
    pub epochs: usize,
    pub samples_per_epoch: usize,
    pub initial_mlu: f64,
    pub final_mlu: f64,
    pub epoch_mlu: Vec<f64>,
}

struct Workspace {
    /// Gradient of the objective with respect to each layer's
    /// pre-activation output, reused across layers.
    grad_w: Vec<Vec<f64>>,
    grad_b: Vec<Vec<f64>>,
    adam_t: usize,
    m_w: Vec<Vec<f64>>,
    v_w: Vec<Vec<f64>>,
    m_b: Vec<Vec<f64>>,
    v_b: Vec<Vec<f64>>,
}

impl Workspace {
    fn like(model: &PredictorModel) -> Self {
        let zw: Vec<Vec<f64>> = model.weights.iter().map(|w| vec![0.0; w.len()]).collect();
        let zb: Vec<Vec<f64>> = model.biases.iter().map(|b| vec![0.0; b.len()]).collect();
        Workspace {
            grad_w: zw.clone(),
            grad_b: zb.clone(),
            adam_t: 0,
            m_w: zw.clone(),
            v_w: zw,
            m_b: zb.clone(),
            v_b: zb,
        }
    }
}

/// Utilization of the active (maximum) link and the gradient of that
/// utilization with respect to the raw path weights. Ties pick the smallest
/// edge id, making the subgradient deterministic.
fn mlu_and_weight_grad(
    t: &Topology,
    ps: &PathSet,
    dm: &DemandMatrix,
    raw: &[f64],
) -> Result<(f64, Vec<f64>)> {
    let offsets = ps.flat_offsets();
    let mut loads = vec![0.0; t.num_edges()];
    let mut sums = vec![0.0; ps.num_pairs()];
    for pair in 0..ps.num_pairs() {
        let slice = &raw[offsets[pair]..offsets[pair + 1]];
        sums[pair] = slice.iter().sum();
    }
    for pair in 0..ps.num_pairs() {
        let (s, d) = crate::pathing::pair_from_index(ps.num_nodes(), pair);
        let volume = dm.get(s, d);
        if volume == 0.0 || sums[pair] <= 0.0 {
            continue;
        }
        for (i, p) in ps.routing_at(pair).iter().enumerate() {
            let share = volume * raw[offsets[pair] + i] / sums[pair];
            for &e in p.edges() {
                loads[e] += share;
            }
        }
    }
    let mut star = 0;
    let mut best = f64::NEG_INFINITY;
    for e in 0..t.num_edges() {
        let u = loads[e] / t.edge(e).capacity;
        if u > best {
            best = u;
            star = e;
        }
    }
    let cap = t.edge(star).capacity;
    let mut grad = vec![0.0; raw.len()];
    for pair in 0..ps.num_pairs() {
        let (s, d) = crate::pathing::pair_from_index(ps.num_nodes(), pair);
        let volume = dm.get(s, d);
        if volume == 0.0 || sums[pair] <= 0.0 {
            continue;
        }
        let slice = &raw[offsets[pair]..offsets[pair + 1]];
        let hits: Vec<bool> = ps
            .routing_at(pair)
            .iter()
            .map(|p| p.contains_edge(star))
            .collect();
        // d/dw_j of sum_i hit_i * w_i / S, with S the pair sum:
        // (hit_j * S - sum_i hit_i w_i) / S^2, scaled by volume / capacity.
        let hit_mass: f64 = slice
            .iter()
            .zip(&hits)
            .map(|(w, &h)| if h { *w } else { 0.0 })
            .sum();
        let s2 = sums[pair] * sums[pair];
        for (j, &h) in hits.iter().enumerate() {
            let num = if h { sums[pair] } else { 0.0 } - hit_mass;
            grad[offsets[pair] + j] = volume / cap * num / s2;
        }
    }
    Ok((best.max(0.0), grad))
}

/// Backpropagates a gradient on the raw outputs through the network,
/// accumulating parameter gradients into `ws`.
fn backprop(model: &PredictorModel, acts: &[Vec<f64>], out_grad: &[f64], ws: &mut Workspace) {
    let depth = model.weights.len();
    // Start with d objective / d output activation, convert through the
    // sigmoid, then walk the hidden ReLU layers backwards.
    let mut delta: Vec<f64> = acts[depth]
        .iter()
        .zip(out_grad)
        .map(|(&a, &g)| g * a * (1.0 - a))
        .collect();
    for l in (0..depth).rev() {
        let x = &acts[l];
        let cols = model.arch[l];
        for (r, &dz) in delta.iter().enumerate() {
            ws.grad_b[l][r] += dz;
            let row = &mut ws.grad_w[l][r * cols..(r + 1) * cols];
            for (c, &xv) in x.iter().enumerate() {
                row[c] += dz * xv;
            }
        }
        if l > 0 {
            let mut prev = vec![0.0; cols];
            for (r, &dz) in delta.iter().enumerate() {
                let row = &model.weights[l][r * cols..(r + 1) * cols];
                for (c, val) in prev.iter_mut().enumerate() {
                    *val += dz * row[c];
                }
            }
            for (val, &a) in prev.iter_mut().zip(&acts[l]) {
                if a <= 0.0 {
                    *val = 0.0;
                }
            }
            delta = prev;
        }
    }
}

fn adam_step(model: &mut PredictorModel, ws: &mut Workspace, lr: f64) {
    const B1: f64 = 0.9;
    const B2: f64 = 0.999;
    const EPS: f64 = 1e-8;
    ws.adam_t += 1;
    let t = ws.adam_t as i32;
    let corr1 = 1.0 - B1.powi(t);
    let corr2 = 1.0 - B2.powi(t);
    let update = |param: &mut Vec<f64>, grad: &mut Vec<f64>, m: &mut Vec<f64>, v: &mut Vec<f64>| {
        for i in 0..param.len() {
            let g = grad[i];
            m[i] = B1 * m[i] + (1.0 - B1) * g;
            v[i] = B2 * v[i] + (1.0 - B2) * g * g;
            let mh = m[i] / corr1;
            let vh = v[i] / corr2;
            param[i] -= lr * mh / (vh.sqrt() + EPS);
            grad[i] = 0.0;
        }
    };
    for l in 0..model.weights.len() {
        update(&mut model.weights[l], &mut ws.grad_w[l], &mut ws.m_w[l], &mut ws.v_w[l]);
        update(&mut model.biases[l], &mut ws.grad_b[l], &mut ws.m_b[l], &mut ws.v_b[l]);
    }
}

/// Trains in place on consecutive windows of `series`: each sample feeds the
/// `history` matrices before epoch `t` and descends the utilization realized
/// on epoch `t` itself. Returns the per-epoch mean utilization curve.
pub fn train(
    model: &mut PredictorModel,
    t: &Topology,
    ps: &PathSet,
    series: &[DemandMatrix],
    cfg: &TrainConfig,
) -> Result<TrainReport> {
    let h = model.history;
    if series.len() <= h {
        return Err(Error::Dimension(format!(
            "{} training matrices cannot form a window of {h} plus a target",
            series.len()
        )));
    }
    if ps.total_routing_paths() != model.output_dim() || ps.num_nodes() != model.num_nodes {
        return Err(Error::Dimension(
            "model was built for a different path set".into(),
        ));
    }
    let samples: Vec<usize> = (h..series.len()).collect();
    let mut ws = Workspace::like(model);
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut epoch_mlu = Vec::with_capacity(cfg.epochs);
    for _ in 0..cfg.epochs {
        let mut order = samples.clone();
        // Fisher-Yates with the run's own generator keeps runs repeatable.
        for i in (1..order.len()).rev() {
            order.swap(i, rng.random_range(0..=i));
        }
        let mut total = 0.0;
        for &s in &order {
            let window: Vec<&DemandMatrix> = series[s - h..s].iter().collect();
            let input = model.input_from_window(&window)?;
            let acts = model.forward_trace(&input)?;
            let raw = acts.last().unwrap();
            let (mlu, grad) = mlu_and_weight_grad(t, ps, &series[s], raw)?;
            total += mlu;
            backprop(model, &acts, &grad, &mut ws);
            adam_step(model, &mut ws, cfg.learning_rate);
        }
        epoch_mlu.push(total / samples.len() as f64);
    }
    Ok(TrainReport {
        epochs: cfg.epochs,
        samples_per_epoch: samples.len(),
        initial_mlu: epoch_mlu.first().copied().unwrap_or(0.0),
        final_mlu: epoch_mlu.last().copied().unwrap_or(0.0),
        epoch_mlu,
    })
}

/// Utilization the model's prediction would realize on `actual` traffic.
pub fn realized_mlu(
    model: &PredictorModel,
    t: &Topology,
    ps: &PathSet,
    window: &[&DemandMatrix],
    actual: &DemandMatrix,
) -> Result<f64> {
    let rc = model.predict(ps, window)?;
    let view = PathSetView::full(ps);
    Ok(crate::te::mlu_report(t, &view, actual, &rc)?.mlu)
}

/// Result of [`gradient_check`].
#[derive(Debug, Clone)]
pub struct GradCheckReport {
    pub params_checked: usize,
    pub max_rel_error: f64,
}

/// Central-difference verification of the full analytic gradient chain on
/// one sample: at least `min_params` parameters spread over every layer are
/// nudged by `h = 1e-5` and compared against backpropagation. The relative
/// error uses `max(|analytic|, |numeric|)` as denominator and counts as zero
/// when both magnitudes are below 1e-10.
pub fn gradient_check(
    model: &PredictorModel,
    t: &Topology,
    ps: &PathSet,
    window: &[&DemandMatrix],
    target: &DemandMatrix,
    min_params: usize,
) -> Result<GradCheckReport> {
    const H: f64 = 1e-5;
    let input = model.input_from_window(window)?;
    let acts = model.forward_trace(&input)?;
    let (_, out_grad) = mlu_and_weight_grad(t, ps, target, acts.last().unwrap())?;
    let mut ws = Workspace::like(model);
    backprop(model, &acts, &out_grad, &mut ws);

    let eval = |m: &PredictorModel| -> Result<f64> {
        let raw = m.forward(&input)?;
        Ok(mlu_and_weight_grad(t, ps, target, &raw)?.0)
    };
    let total = model.num_params();
    let step = (total / min_params).max(1);
    let mut checked = 0;
    let mut max_rel = 0.0_f64;
    let mut scratch = model.clone();
    for flat in (0..total).step_by(step) {
        // Locate parameter `flat` in the weight-then-bias layout per layer.
        let mut idx = flat;
        for l in 0..model.weights.len() {
            let wl = model.weights[l].len();
            let bl = model.biases[l].len();
            if idx < wl {
                let original = model.weights[l][idx];
                scratch.weights[l][idx] = original + H;
                let up = eval(&scratch)?;
                scratch.weights[l][idx] = original - H;
                let down = eval(&scratch)?;
                scratch.weights[l][idx] = original;
                let numeric = (up - down) / (2.0 * H);
                max_rel = max_rel.max(rel_error(ws.grad_w[l][idx], numeric));
                break;
            }
            idx -= wl;
            if idx < bl {
                let original = model.biases[l][idx];
                scratch.biases[l][idx] = original + H;
                let up = eval(&scratch)?;
                scratch.biases[l][idx] = original - H;
                let down = eval(&scratch)?;
                scratch.biases[l][idx] = original;
                let numeric = (up - down) / (2.0 * H);
                max_rel = max_rel.max(rel_error(ws.grad_b[l][idx], numeric));
                break;
            }
            idx -= bl;
        }
        checked += 1;
    }
    Ok(GradCheckReport {
        params_checked: checked,
        max_rel_error: max_rel,
    })
}

fn rel_error(a: f64, n: f64) -> f64 {
    let scale = a.abs().max(n.abs());
    if scale < 1e-10 {
        0.0
    } else {
        (a - n).abs() / scale
    }
}

/// One noise level of a robustness sweep: relative change of the realized
/// MLU when the model's input window is perturbed but the evaluated traffic
/// stays clean.
#[derive(Debug, Clone, Serialize)]
pub struct NoiseRow {
    pub alpha: f64,
    /// Mean of the signed per-test-point relative changes.
    pub mean_change: f64,
    /// Upper-tail (99th percentile) of the signed relative changes.
    pub p99_change: f64,
    pub samples: usize,
}

/// Measures prediction stability under input noise.
///
/// For every test index `i >= test_start` the model first predicts from the
/// clean window `series[i - history .. i]` and the realized MLU on
/// `series[i]` is recorded. Then, per noise level, every window matrix is
/// independently perturbed and the prediction repeated; the evaluated
/// matrix itself is never touched, so any MLU change is attributable to the
/// model reacting to noisy inputs. Rows come back in ascending `alpha`
/// order, each level driven by its own value-derived seed so adding or
/// removing levels never reshuffles the others.
pub fn noise_robustness(
    model: &PredictorModel,
    t: &Topology,
    ps: &PathSet,
    series: &[DemandMatrix],
    test_start: usize,
    alphas: &[f64],
    seed: u64,
) -> Result<Vec<NoiseRow>> {
    let h = model.history();
    if test_start < h || test_start >= series.len() {
        return Err(Error::Dimension(format!(
            "test start {test_start} needs a {h}-matrix window and at least one target \
             in a series of {}",
            series.len()
        )));
    }
    if alphas.is_empty() {
        return Err(Error::Dimension("no noise levels requested".into()));
    }
    let mut levels = alphas.to_vec();
    levels.sort_by(|a, b| a.partial_cmp(b).expect("finite noise levels"));

    let mut clean = Vec::new();
    for i in test_start..series.len() {
        let window: Vec<&DemandMatrix> = series[i - h..i].iter().collect();
        let mlu = realized_mlu(model, t, ps, &window, &series[i])?;
        if mlu <= 0.0 {
            return Err(Error::Unsolvable(format!(
                "clean MLU is zero at test index {i}; relative change undefined"
            )));
        }
        clean.push(mlu);
    }

    let mut rows = Vec::with_capacity(levels.len());
    for &alpha in &levels {
        let mut rng = ChaCha8Rng::seed_from_u64(seed ^ alpha.to_bits());
        let mut changes = Vec::with_capacity(clean.len());
        for (slot, i) in (test_start..series.len()).enumerate() {
            let noisy: Vec<DemandMatrix> = series[i - h..i]
                .iter()
                .map(|m| crate::demand::perturb(m, alpha, &mut rng))
                .collect::<Result<Vec<_>>>()?;
            let window: Vec<&DemandMatrix> = noisy.iter().collect();
            let mlu = realized_mlu(model, t, ps, &window, &series[i])?;
            changes.push((mlu - clean[slot]) / clean[slot]);
        }
        changes.sort_by(|a, b| a.partial_cmp(b).expect("finite changes"));
        let samples = changes.len();
        let mean = changes.iter().sum::<f64>() / samples as f64;
        let rank = ((0.99 * samples as f64).ceil() as usize).clamp(1, samples);
        rows.push(NoiseRow {
            alpha,
            mean_change: mean,
            p99_change: changes[rank - 1],
            samples,
        });
    }
    Ok(rows)
}
