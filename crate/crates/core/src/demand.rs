//! Traffic demand matrices: gravity-model synthesis with exponential node
//! masses, epoch series, train/test splitting, and multiplicative noise.

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Exp, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::pathing::pair_index;
use crate::topology::NodeId;

/// Square demand matrix with a zero diagonal, stored row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct DemandMatrix {
    n: usize,
    values: Vec<f64>,
}

impl DemandMatrix {
    pub fn zeros(n: usize) -> Self {
        DemandMatrix {
            n,
            values: vec![0.0; n * n],
        }
    }

    pub fn from_rows(rows: Vec<Vec<f64>>) -> Result<Self> {
        let n = rows.len();
        let mut values = Vec::with_capacity(n * n);
        for (i, row) in rows.iter().enumerate() {
            if row.len() != n {
                return Err(Error::Dimension(format!(
                    "demand row {i} has {} entries, expected {n}",
                    row.len()
                )));
            }
            values.extend_from_slice(row);
        }
        for i in 0..n {
            if values[i * n + i] != 0.0 {
                return Err(Error::Dimension(format!(
                    "demand diagonal entry ({i}, {i}) must be zero"
                )));
            }
        }
        if values.iter().any(|v| !v.is_finite() || *v < 0.0) {
            return Err(Error::Dimension(
                "demand entries must be finite and nonnegative".into(),
            ));
        }
        Ok(DemandMatrix { n, values })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn get(&self, s: NodeId, d: NodeId) -> f64 {
        self.values[s * self.n + d]
    }

    pub fn set(&mut self, s: NodeId, d: NodeId, v: f64) {
        assert_ne!(s, d, "diagonal stays zero");
        self.values[s * self.n + d] = v;
    }

    pub fn total(&self) -> f64 {
        self.values.iter().sum()
    }

    /// Entries in ordered-pair index order (see [`pair_index`]), the layout
    /// flat consumers such as the demand predictor expect.
    pub fn pair_vector(&self) -> Vec<f64> {
        let mut out = vec![0.0; self.n * (self.n - 1)];
        for s in 0..self.n {
            for d in 0..self.n {
                if s != d {
                    out[pair_index(self.n, s, d)] = self.get(s, d);
                }
            }
        }
        out
    }

    pub fn scaled(&self, factor: f64) -> Self {
        DemandMatrix {
            n: self.n,
            values: self.values.iter().map(|v| v * factor).collect(),
        }
    }

    /// Rescales so the entry sum equals `volume`.
    pub fn scaled_to_total(&self, volume: f64) -> Result<Self> {
        let t = self.total();
        if t <= 0.0 {
            return Err(Error::Dimension(
                "cannot rescale an all-zero demand matrix".into(),
            ));
        }
        Ok(self.scaled(volume / t))
    }

    fn rows(&self) -> Vec<Vec<f64>> {
        (0..self.n)
            .map(|i| self.values[i * self.n..(i + 1) * self.n].to_vec())
            .collect()
    }
}

/// Gravity matrix from explicit node masses: entry (i, j) gets the share
/// `m_i * m_j` of `volume`, normalized over all ordered pairs.
pub fn gravity_from_masses(masses: &[f64], volume: f64) -> Result<DemandMatrix> {
    let n = masses.len();
    if n < 2 {
        return Err(Error::Dimension(
            "gravity model needs at least two nodes".into(),
        ));
    }
    if masses.iter().any(|m| !m.is_finite() || *m <= 0.0) {
        return Err(Error::Dimension("node masses must be positive".into()));
    }
    let sum: f64 = masses.iter().sum();
    let sum_sq: f64 = masses.iter().map(|m| m * m).sum();
    let denom = sum * sum - sum_sq;
    let mut out = DemandMatrix::zeros(n);
    for i in 0..n {
        for j in 0..n {
            if i != j {
                // Multiplying the masses first keeps the matrix exactly
                // symmetric (f64 multiplication commutes bitwise).
                out.set(i, j, volume * (masses[i] * masses[j]) / denom);
            }
        }
    }
    Ok(out)
}

/// Gravity matrix with i.i.d. unit-rate exponential masses drawn from `rng`.
pub fn gravity<R: Rng>(n: usize, volume: f64, rng: &mut R) -> Result<DemandMatrix> {
    let exp = Exp::new(1.0).expect("unit rate");
    let masses: Vec<f64> = (0..n)
        .map(|_| f64::max(exp.sample(rng), f64::MIN_POSITIVE))
        .collect();
    gravity_from_masses(&masses, volume)
}

/// A sequence of per-epoch demand matrices over the same node set.
#[derive(Debug, Clone, PartialEq)]
pub struct DemandSeries {
    num_nodes: usize,
    matrices: Vec<DemandMatrix>,
}

impl DemandSeries {
    pub fn new(matrices: Vec<DemandMatrix>) -> Result<Self> {
        let Some(first) = matrices.first() else {
            return Err(Error::Dimension("demand series is empty".into()));
        };
        let n = first.n();
        if matrices.iter().any(|m| m.n() != n) {
            return Err(Error::Dimension(
                "demand series mixes matrix sizes".into(),
            ));
        }
        Ok(DemandSeries {
            num_nodes: n,
            matrices,
        })
    }

    pub fn num_nodes(&self) -> usize {
        self.num_nodes
    }

    pub fn len(&self) -> usize {
        self.matrices.len()
    }

    pub fn is_empty(&self) -> bool {
        self.matrices.is_empty()
    }

    pub fn matrix(&self, epoch: usize) -> &DemandMatrix {
        &self.matrices[epoch]
    }

    pub fn matrices(&self) -> &[DemandMatrix] {
        &self.matrices
    }

    /// Chronological split at `floor(train_fraction * len)`.
    pub fn split(&self, train_fraction: f64) -> Result<(&[DemandMatrix], &[DemandMatrix])> {
        if self.len() < 4 {
            return Err(Error::Dimension(format!(
                "demand series of length {} is too short to split",
                self.len()
            )));
        }
        if !(0.0..=1.0).contains(&train_fraction) {
            return Err(Error::Dimension(format!(
                "train fraction {train_fraction} outside [0, 1]"
            )));
        }
        let cut = (train_fraction * self.len() as f64).floor() as usize;
        Ok(self.matrices.split_at(cut))
    }

    pub fn to_json(&self) -> String {
        let file = SeriesFile {
            num_nodes: self.num_nodes,
            matrices: self.matrices.iter().map(DemandMatrix::rows).collect(),
        };
        serde_json::to_string_pretty(&file).expect("series serializes")
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let file: SeriesFile = serde_json::from_str(text)?;
        let matrices = file
            .matrices
            .into_iter()
            .map(DemandMatrix::from_rows)
            .collect::<Result<Vec<_>>>()?;
        let series = DemandSeries::new(matrices)?;
        if series.num_nodes != file.num_nodes {
            return Err(Error::Dimension(format!(
                "series declares {} nodes but matrices have {}",
                file.num_nodes, series.num_nodes
            )));
        }
        Ok(series)
    }
}

#[derive(Serialize, Deserialize)]
struct SeriesFile {
    num_nodes: usize,
    matrices: Vec<Vec<Vec<f64>>>,
}

/// Independent gravity matrices, one per epoch, with fresh masses each epoch.
pub fn gravity_series(n: usize, epochs: usize, volume: f64, seed: u64) -> Result<DemandSeries> {
    if epochs == 0 {
        return Err(Error::Dimension("epoch count must be positive".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let matrices = (0..epochs)
        .map(|_| gravity(n, volume, &mut rng))
        .collect::<Result<Vec<_>>>()?;
    DemandSeries::new(matrices)
}

/// Temporally correlated gravity matrices: node masses follow a geometric
/// random walk with optional pull back toward their starting values, so
/// consecutive epochs resemble each other the way measured traffic does.
/// Each step maps mass `m` to `m0^r * m^(1-r) * exp(sigma * normal)` where
/// `m0` is the node's initial mass; `reversion = 0` is a pure random walk
/// (the series drifts without bound), `reversion = 1` redraws around `m0`
/// every epoch, and values between give a stationary series whose
/// autocorrelation decays by `1 - reversion` per epoch. Every epoch is still
/// an exact gravity matrix at the given total volume.
pub fn gravity_walk_series(
    n: usize,
    epochs: usize,
    volume: f64,
    sigma: f64,
    reversion: f64,
    seed: u64,
) -> Result<DemandSeries> {
    if epochs == 0 {
        return Err(Error::Dimension("epoch count must be positive".into()));
    }
    if !(sigma.is_finite() && sigma >= 0.0) {
        return Err(Error::Dimension(format!(
            "walk volatility {sigma} must be a nonnegative finite number"
        )));
    }
    if !(0.0..=1.0).contains(&reversion) {
        return Err(Error::Dimension(format!(
            "walk reversion {reversion} outside [0, 1]"
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let exp = Exp::new(1.0).expect("unit rate");
    let normal = Normal::new(0.0, 1.0).expect("unit normal");
    let anchors: Vec<f64> = (0..n)
        .map(|_| f64::max(exp.sample(&mut rng), f64::MIN_POSITIVE))
        .collect();
    let mut masses = anchors.clone();
    let mut matrices = Vec::with_capacity(epochs);
    for _ in 0..epochs {
        matrices.push(gravity_from_masses(&masses, volume)?);
        for (m, &m0) in masses.iter_mut().zip(&anchors) {
            let pulled = m0.powf(reversion) * m.powf(1.0 - reversion);
            *m = (pulled * (sigma * normal.sample(&mut rng)).exp())
                .clamp(f64::MIN_POSITIVE, 1e12);
        }
    }
    DemandSeries::new(matrices)
}

/// Multiplies each off-diagonal entry by an independent uniform factor in
/// `[1 - alpha, 1 + alpha]`.
pub fn perturb<R: Rng>(m: &DemandMatrix, alpha: f64, rng: &mut R) -> Result<DemandMatrix> {
    if !(0.0..=1.0).contains(&alpha) {
        return Err(Error::Dimension(format!(
            "noise level {alpha} outside [0, 1]"
        )));
    }
    let n = m.n();
    let mut out = DemandMatrix::zeros(n);
    for i in 0..n {
        for j in 0..n {
            if i != j {
                let factor = 1.0 - alpha + 2.0 * alpha * rng.random::<f64>();
                out.set(i, j, m.get(i, j) * factor);
            }
        }
    }
    Ok(out)
}
