//! Stage pipeline with artifact caching.
//!
//! Each stage writes its artifact under the output directory together with a
//! fingerprint of everything that influenced it (recorded in stages.json).
//! A rerun reuses an artifact only when its fingerprint still matches, so
//! editing the config invalidates exactly the stages it touches. All
//! generation is seeded, so a cold rerun reproduces cached artifacts byte
//! for byte.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use serde_json::json;

use pathweave::demand::{gravity, gravity_series, gravity_walk_series, DemandMatrix, DemandSeries};
use pathweave::failure::{recover, sample_scenarios, ScenarioSample};
use pathweave::learn::{self, train, NoiseRow, PredictorModel, TrainConfig, TrainReport};
use pathweave::metrics::{
    avg_delay, loss_fraction, perc_loss, rows_to_csv, scenario_loss, summarize, LossRecord,
    RegimeSummary, ResultRow,
};
use pathweave::pathing::{
    backup_coverage, build_path_set_custom, risk_profile, PathSet, RiskKind,
};
use pathweave::te::{calibrate_volume, lp_oracle, normalized_mlu, PathSetView};
use pathweave::topology::{load_topology, random_connected, Topology, TopologyFormat};

use crate::config::{self, ExperimentConfig};
use crate::{CliError, CliResult, ConfigArgs};

const STAGES_FILE: &str = "stages.json";
const PATHSET_FILE: &str = "pathset.json";
const TMS_FILE: &str = "tms.json";
const MODEL_FILE: &str = "model.ckpt";
const RESULTS_FILE: &str = "results.csv";
const SUMMARY_FILE: &str = "summary.json";

/// Loaded config plus the pruned working topology and the stage ledger.
pub struct Pipeline {
    cfg: ExperimentConfig,
    out: PathBuf,
    name: String,
    t: Topology,
    stages: BTreeMap<String, String>,
}

fn read_text(path: &Path) -> CliResult<String> {
    fs::read_to_string(path)
        .map_err(|e| CliError::Data(format!("cannot read {}: {e}", path.display())))
}

fn write_text(path: &Path, text: &str) -> CliResult<()> {
    if let Some(dir) = path.parent() {
        fs::create_dir_all(dir)
            .map_err(|e| CliError::Data(format!("cannot create {}: {e}", dir.display())))?;
    }
    fs::write(path, text)
        .map_err(|e| CliError::Data(format!("cannot write {}: {e}", path.display())))
}

/// Loads the topology named by the configuration, without pruning.
fn load_raw_topology(cfg: &ExperimentConfig) -> CliResult<(String, Topology)> {
    if let Some(r) = &cfg.topology.random {
        let name = format!("random_n{}_e{}_s{}", r.nodes, r.extra_edges, r.seed);
        return Ok((name, random_connected(r.nodes, r.extra_edges, r.seed)));
    }
    let path = cfg.topology.path.as_ref().expect("validated");
    let name = path
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_else(|| "topology".into());
    let format = match cfg.topology.format.as_deref() {
        Some("edge_list") => TopologyFormat::EdgeList,
        Some("graphml") => TopologyFormat::GraphmlLite,
        Some(_) => unreachable!("validated"),
        None => {
            if path.extension().map(|e| e == "graphml").unwrap_or(false) {
                TopologyFormat::GraphmlLite
            } else {
                TopologyFormat::EdgeList
            }
        }
    };
    let file = fs::File::open(path)
        .map_err(|e| CliError::Data(format!("cannot open {}: {e}", path.display())))?;
    let t = load_topology(file, format, &path.display().to_string())?;
    Ok((name, t))
}

impl Pipeline {
    /// Loads config and topology and prunes degree-one nodes; experiments run
    /// on the pruned core, where every surviving link can have a detour.
    pub fn new(args: &ConfigArgs) -> CliResult<Self> {
        let cfg = config::load(args)?;
        let out = config::require_out(&cfg)?;
        let (name, raw) = load_raw_topology(&cfg)?;
        let t = raw.prune_degree_one()?.topology;
        let stages = match fs::read_to_string(out.join(STAGES_FILE)) {
            Ok(text) => serde_json::from_str(&text).map_err(|e| {
                CliError::Data(format!("corrupt {STAGES_FILE}: {e}; delete the output dir"))
            })?,
            Err(_) => BTreeMap::new(),
        };
        Ok(Pipeline {
            cfg,
            out,
            name,
            t,
            stages,
        })
    }

    fn save_stages(&self) -> CliResult<()> {
        let text = serde_json::to_string_pretty(&self.stages).expect("string map");
        write_text(&self.out.join(STAGES_FILE), &text)
    }

    /// Runs one cached stage: reuses the artifact when the fingerprint
    /// matches, otherwise rebuilds, writes, and records the fingerprint.
    fn stage<T>(
        &mut self,
        key: &str,
        file: &str,
        fingerprint: String,
        rebuild: impl FnOnce(&Pipeline) -> CliResult<(T, String)>,
        reload: impl FnOnce(&Pipeline, &str) -> CliResult<T>,
    ) -> CliResult<T> {
        let path = self.out.join(file);
        if self.stages.get(key) == Some(&fingerprint) && path.exists() {
            let text = read_text(&path)?;
            return reload(self, &text);
        }
        let (value, text) = rebuild(self)?;
        write_text(&path, &text)?;
        self.stages.insert(key.to_string(), fingerprint);
        self.save_stages()?;
        Ok(value)
    }

    fn fingerprint_paths(&self) -> String {
        json!({
            "topology": self.t.to_edge_list(),
            "k": self.cfg.k,
            "backup_k": self.cfg.backup_k(),
            "routing": self.cfg.routing,
        })
        .to_string()
    }

    fn fingerprint_tm(&self) -> String {
        json!({
            "paths": self.cfg.tm.calibrate.as_ref().map(|_| self.fingerprint_paths()),
            "topology": self.t.to_edge_list(),
            "count": self.cfg.tm.count,
            "seed": self.cfg.tm.seed,
            "volume": self.cfg.tm.volume,
            "calibrate": self.cfg.tm.calibrate.as_ref()
                .map(|c| [c.target, c.lo, c.hi]),
            "walk_sigma": self.cfg.tm.walk_sigma,
            "walk_reversion": self.cfg.tm.walk_reversion,
        })
        .to_string()
    }

    fn fingerprint_train(&self) -> String {
        json!({
            "paths": self.fingerprint_paths(),
            "tm": self.fingerprint_tm(),
            "split": self.cfg.train.split,
            "history": self.cfg.train.history,
            "epochs": self.cfg.train.epochs,
            "learning_rate": self.cfg.train.learning_rate,
            "seed": self.cfg.train.seed,
            "model_seed": self.cfg.model_seed(),
        })
        .to_string()
    }

    pub fn ensure_paths(&mut self) -> CliResult<PathSet> {
        let fp = self.fingerprint_paths();
        self.stage(
            "paths",
            PATHSET_FILE,
            fp,
            |p| {
                let ps = build_path_set_custom(
                    &p.t,
                    p.cfg.routing_algo()?,
                    p.cfg.k,
                    p.cfg.backup_k(),
                )?;
                let text = ps.to_json(&p.t);
                Ok((ps, text))
            },
            |p, text| Ok(PathSet::from_json(text, &p.t)?),
        )
    }

    /// The demand series; needs the path set only when volume calibration is
    /// configured.
    pub fn ensure_tms(&mut self, ps: Option<&PathSet>) -> CliResult<DemandSeries> {
        let fp = self.fingerprint_tm();
        let volume = match (self.cfg.tm.volume, &self.cfg.tm.calibrate) {
            (Some(v), None) => v,
            (None, Some(c)) => {
                let ps = ps.expect("caller supplies the path set when calibrating");
                let n = self.t.num_nodes();
                // Calibrate against the series' own first matrix so realized
                // utilization lands in the target band.
                let probe = match self.cfg.tm.walk_sigma {
                    Some(sigma) => gravity_walk_series(
                        n,
                        1,
                        1.0,
                        sigma,
                        self.cfg.tm.walk_reversion.unwrap_or(0.0),
                        self.cfg.tm.seed,
                    )?
                    .matrix(0)
                    .clone(),
                    None => {
                        let mut rng = ChaCha8Rng::seed_from_u64(self.cfg.tm.seed);
                        gravity(n, 1.0, &mut rng)?
                    }
                };
                calibrate_volume(&self.t, ps, &probe, c.target, c.lo, c.hi)?.volume
            }
            _ => unreachable!("validated"),
        };
        self.stage(
            "tm",
            TMS_FILE,
            fp,
            |p| {
                let n = p.t.num_nodes();
                let series = match p.cfg.tm.walk_sigma {
                    Some(sigma) => gravity_walk_series(
                        n,
                        p.cfg.tm.count,
                        volume,
                        sigma,
                        p.cfg.tm.walk_reversion.unwrap_or(0.0),
                        p.cfg.tm.seed,
                    )?,
                    None => gravity_series(n, p.cfg.tm.count, volume, p.cfg.tm.seed)?,
                };
                let text = series.to_json();
                Ok((series, text))
            },
            |_, text| Ok(DemandSeries::from_json(text)?),
        )
    }

    pub fn ensure_model(
        &mut self,
        ps: &PathSet,
        series: &DemandSeries,
    ) -> CliResult<(PredictorModel, TrainReport)> {
        let fp = self.fingerprint_train();
        self.stage(
            "train",
            MODEL_FILE,
            fp,
            |p| {
                let (train_set, _) = series.split(p.cfg.train.split)?;
                let mut model =
                    PredictorModel::new(ps, p.cfg.train.history, p.cfg.model_seed())?;
                let tc = TrainConfig {
                    epochs: p.cfg.train.epochs,
                    learning_rate: p.cfg.train.learning_rate,
                    seed: p.cfg.train.seed,
                };
                let report = train(&mut model, &p.t, ps, train_set, &tc)?;
                let ckpt = Checkpoint {
                    model: serde_json::from_str(&model.to_json()).expect("model json"),
                    report: report.clone(),
                };
                let text = serde_json::to_string_pretty(&ckpt).expect("checkpoint json");
                Ok(((model, report), text))
            },
            |_, text| {
                let ckpt: Checkpoint = serde_json::from_str(text).map_err(|e| {
                    CliError::Data(format!("corrupt {MODEL_FILE}: {e}; delete the output dir"))
                })?;
                let model = PredictorModel::from_json(&ckpt.model.to_string())?;
                Ok((model, ckpt.report))
            },
        )
    }
}

/// Trained model plus its training history, stored as one artifact so warm
/// runs can reproduce the summary byte for byte.
#[derive(Serialize, Deserialize)]
struct Checkpoint {
    model: serde_json::Value,
    report: TrainReport,
}

pub fn cmd_topo(args: &ConfigArgs) -> CliResult<()> {
    let cfg = config::load(args)?;
    let (name, raw) = load_raw_topology(&cfg)?;
    println!("{name}: {} nodes, {} links", raw.num_nodes(), raw.num_edges());
    println!("degree histogram:");
    for (degree, count) in raw.degree_histogram() {
        println!("  {degree}: {count}");
    }
    let pruned = raw.prune_degree_one()?;
    println!(
        "pruned: {} nodes, {} links ({} removed)",
        pruned.topology.num_nodes(),
        pruned.topology.num_edges(),
        pruned.removed()
    );
    Ok(())
}

pub fn cmd_paths(args: &ConfigArgs) -> CliResult<()> {
    let mut p = Pipeline::new(args)?;
    let ps = p.ensure_paths()?;
    println!(
        "pathset: k={} backup_k={} routing={}",
        p.cfg.k,
        p.cfg.backup_k(),
        p.cfg.routing
    );
    println!(
        "routing entries: {} ({} paths)",
        ps.num_pairs(),
        ps.total_routing_paths()
    );
    println!(
        "backup entries: {} links ({} directed paths)",
        ps.num_edges(),
        ps.total_backup_paths_directed()
    );
    println!(
        "backup coverage (>= {} detours): {:.1}%",
        ps.k(),
        100.0 * backup_coverage(&ps, ps.k())
    );
    for kind in [RiskKind::Adjacent, RiskKind::NonAdjacent, RiskKind::Backup] {
        let r = risk_profile(&ps, &p.t, kind);
        println!(
            "risk {}: count {} mean {:.4} p50 {:.4} p90 {:.4} max {:.4} (skipped {})",
            r.kind, r.count, r.mean, r.p50, r.p90, r.max, r.skipped
        );
    }
    println!("wrote {}", p.out.join(PATHSET_FILE).display());
    Ok(())
}

pub fn cmd_tm(args: &ConfigArgs) -> CliResult<()> {
    let mut p = Pipeline::new(args)?;
    let ps = if p.cfg.tm.calibrate.is_some() {
        Some(p.ensure_paths()?)
    } else {
        None
    };
    let series = p.ensure_tms(ps.as_ref())?;
    println!(
        "tms: {} matrices, {} nodes, total volume {:.6} each",
        series.len(),
        series.num_nodes(),
        series.matrix(0).total()
    );
    let (train_len, test_len) = p.cfg.split_sizes();
    println!("split: {train_len} train / {test_len} test");
    println!("wrote {}", p.out.join(TMS_FILE).display());
    Ok(())
}

pub fn cmd_train(args: &ConfigArgs) -> CliResult<()> {
    let mut p = Pipeline::new(args)?;
    let ps = p.ensure_paths()?;
    let series = p.ensure_tms(Some(&ps))?;
    let (_, report) = p.ensure_model(&ps, &series)?;
    println!(
        "train: {} epochs x {} samples, mean utilization {:.6} -> {:.6}",
        report.epochs, report.samples_per_epoch, report.initial_mlu, report.final_mlu
    );
    println!("wrote {}", p.out.join(MODEL_FILE).display());
    Ok(())
}

/// Everything summary.json carries besides the raw rows.
#[derive(Serialize)]
struct RunSummary {
    topology: String,
    nodes: usize,
    links: usize,
    cells: usize,
    simultaneous: usize,
    resamples: usize,
    train: TrainReport,
    regimes: Vec<RegimeSummary>,
    perc_loss: Vec<PercLossLine>,
}

#[derive(Serialize)]
struct PercLossLine {
    regime: String,
    beta: f64,
    value: f64,
}

pub fn cmd_run(args: &ConfigArgs) -> CliResult<()> {
    let mut p = Pipeline::new(args)?;
    let ps = p.ensure_paths()?;
    let series = p.ensure_tms(Some(&ps))?;
    let (model, report) = p.ensure_model(&ps, &series)?;
    if p.cfg.scenarios.simultaneous >= p.t.num_edges() {
        return Err(CliError::Config(format!(
            "scenarios.simultaneous = {} but the pruned topology has {} links",
            p.cfg.scenarios.simultaneous,
            p.t.num_edges()
        )));
    }
    let sample = sample_scenarios(
        &p.t,
        p.cfg.scenarios.count,
        p.cfg.scenarios.simultaneous,
        p.cfg.scenarios.seed,
    )?;
    let (rows, summary) = evaluate(&p, &ps, &series, &model, &report, &sample)?;
    write_text(&p.out.join(RESULTS_FILE), &rows_to_csv(&rows))?;
    let text = serde_json::to_string_pretty(&summary).expect("summary json");
    write_text(&p.out.join(SUMMARY_FILE), &(text + "\n"))?;
    for r in &summary.regimes {
        println!(
            "regime {}: mean mlu {:.6}, mean normalized {:.6}, p99 normalized {:.6}",
            r.regime, r.mlu.mean, r.normalized_mlu.mean, r.normalized_mlu.p99
        );
    }
    for line in &summary.perc_loss {
        println!(
            "perc_loss {} beta {}: {:.6}",
            line.regime, line.beta, line.value
        );
    }
    println!("wrote {}", p.out.join(RESULTS_FILE).display());
    println!("wrote {}", p.out.join(SUMMARY_FILE).display());
    Ok(())
}

/// The evaluation grid. Cell i pairs sampled scenario i with test matrix
/// i mod test_len; each configured strategy recovers the same cell. The MLU
/// of every outcome is normalized by the failure-free optimum of that cell's
/// matrix, so columns stay comparable across cells.
fn evaluate(
    p: &Pipeline,
    ps: &PathSet,
    series: &DemandSeries,
    model: &PredictorModel,
    report: &TrainReport,
    sample: &ScenarioSample,
) -> CliResult<(Vec<ResultRow>, RunSummary)> {
    let (train_len, test_len) = p.cfg.split_sizes();
    let history = p.cfg.train.history;
    let count = sample.scenarios.len();
    let used: Vec<usize> = (0..count.min(test_len)).collect();
    let denominators: Vec<(usize, f64)> = used
        .par_iter()
        .map(|&j| {
            let dm = series.matrix(train_len + j);
            let sol = lp_oracle(&p.t, &PathSetView::full(ps), dm)?;
            Ok((j, sol.mlu))
        })
        .collect::<Result<_, pathweave::Error>>()?;
    let denom_of = |j: usize| {
        denominators
            .iter()
            .find(|(jj, _)| *jj == j)
            .expect("denominator computed")
            .1
    };
    let cells: Vec<Vec<ResultRow>> = (0..count)
        .into_par_iter()
        .map(|i| -> Result<Vec<ResultRow>, pathweave::Error> {
            let j = i % test_len;
            let idx = train_len + j;
            let window: Vec<&DemandMatrix> =
                (idx - history..idx).map(|x| series.matrix(x)).collect();
            let rc = model.predict(ps, &window)?;
            let dm = series.matrix(idx);
            let base = denom_of(j);
            p.cfg
                .regimes
                .iter()
                .map(|&strategy| {
                    let o = recover(
                        &p.t,
                        ps,
                        &sample.scenarios[i].failed_edges,
                        dm,
                        &rc,
                        strategy,
                    )?;
                    Ok(ResultRow {
                        topology: p.name.clone(),
                        regime: strategy.name().to_string(),
                        tm_index: idx,
                        scenario_id: i,
                        mlu: o.mlu,
                        normalized_mlu: normalized_mlu(o.mlu, base)?,
                        loss: loss_fraction(o.mlu),
                        delay: avg_delay(&o.loads, &p.t).omega,
                    })
                })
                .collect()
        })
        .collect::<Result<_, pathweave::Error>>()?;
    let rows: Vec<ResultRow> = cells.into_iter().flatten().collect();
    let regime_count = p.cfg.regimes.len();
    let mut perc = Vec::new();
    for (ri, &strategy) in p.cfg.regimes.iter().enumerate() {
        let records: Vec<LossRecord> = (0..count)
            .map(|i| {
                let row = &rows[i * regime_count + ri];
                let dm = series.matrix(row.tm_index);
                scenario_loss(row.mlu, sample.scenarios[i].weight, dm)
            })
            .collect();
        for &beta in &p.cfg.betas {
            perc.push(PercLossLine {
                regime: strategy.name().to_string(),
                beta,
                value: perc_loss(&records, beta),
            });
        }
    }
    let summary = RunSummary {
        topology: p.name.clone(),
        nodes: p.t.num_nodes(),
        links: p.t.num_edges(),
        cells: count,
        simultaneous: p.cfg.scenarios.simultaneous,
        resamples: sample.resamples,
        train: report.clone(),
        regimes: summarize(&rows),
        perc_loss: perc,
    };
    Ok((rows, summary))
}

pub fn cmd_noise(args: &ConfigArgs, alphas: &[f64]) -> CliResult<()> {
    config::validate_alphas(alphas)?;
    let mut p = Pipeline::new(args)?;
    let ps = p.ensure_paths()?;
    let series = p.ensure_tms(Some(&ps))?;
    let (model, _) = p.ensure_model(&ps, &series)?;
    let (train_len, _) = p.cfg.split_sizes();
    let rows: Vec<NoiseRow> = learn::noise_robustness(
        &model,
        &p.t,
        &ps,
        series.matrices(),
        train_len,
        alphas,
        p.cfg.noise_seed,
    )?;
    println!("{}", serde_json::to_string_pretty(&rows).expect("noise json"));
    Ok(())
}
