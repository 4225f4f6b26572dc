//! Experiment configuration: one JSON file, command-line overrides, strict
//! validation before any stage runs.

use std::fs;
use std::path::PathBuf;

use serde::Deserialize;

use pathweave::failure::Strategy;
use pathweave::pathing::RoutingAlgo;

use crate::{CliError, CliResult, ConfigArgs};

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub topology: TopologySpec,
    /// Routing paths per ordered pair.
    #[serde(default = "default_k")]
    pub k: usize,
    /// Backup detours kept per link; defaults to `k`.
    #[serde(default)]
    pub backup_k: Option<usize>,
    /// "edksp" (edge-disjoint) or "ksp" (loopless shortest).
    #[serde(default = "default_routing")]
    pub routing: String,
    pub tm: TmSpec,
    pub train: TrainSpec,
    pub scenarios: ScenarioSpec,
    #[serde(default = "default_regimes")]
    pub regimes: Vec<Strategy>,
    /// Percentile-loss levels reported in the summary.
    #[serde(default = "default_betas")]
    pub betas: Vec<f64>,
    /// Seed for the perturbation sweep of the noise command.
    #[serde(default = "default_noise_seed")]
    pub noise_seed: u64,
    pub out: Option<PathBuf>,
}

/// Either a file reference or a seeded random graph; exactly one must be set.
#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TopologySpec {
    pub path: Option<PathBuf>,
    /// "edge_list" or "graphml"; inferred from the extension when omitted.
    pub format: Option<String>,
    pub random: Option<RandomTopo>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RandomTopo {
    pub nodes: usize,
    pub extra_edges: usize,
    pub seed: u64,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TmSpec {
    pub count: usize,
    pub seed: u64,
    /// Total demand per matrix; mutually exclusive with `calibrate`.
    pub volume: Option<f64>,
    /// Pick the volume whose optimal utilization hits this target band.
    pub calibrate: Option<CalibrateSpec>,
    /// Random-walk step size for temporally correlated series; omitted means
    /// independent draws.
    pub walk_sigma: Option<f64>,
    /// Pull toward the starting masses, in [0, 1]; 0 (the default) walks
    /// freely, larger values keep the series stationary.
    pub walk_reversion: Option<f64>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CalibrateSpec {
    pub target: f64,
    pub lo: f64,
    pub hi: f64,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrainSpec {
    pub epochs: usize,
    pub learning_rate: f64,
    /// Shuffling seed for the training loop.
    pub seed: u64,
    /// Weight initialization seed; defaults to `seed + 1`.
    #[serde(default)]
    pub model_seed: Option<u64>,
    /// Demand matrices fed to each prediction.
    #[serde(default = "default_history")]
    pub history: usize,
    /// Leading fraction of the series used for training.
    #[serde(default = "default_split")]
    pub split: f64,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioSpec {
    pub count: usize,
    #[serde(default = "default_simultaneous")]
    pub simultaneous: usize,
    pub seed: u64,
}

fn default_k() -> usize {
    4
}
fn default_routing() -> String {
    "edksp".into()
}
fn default_regimes() -> Vec<Strategy> {
    vec![Strategy::Weave, Strategy::SourceReroute]
}
fn default_betas() -> Vec<f64> {
    vec![0.9, 0.99]
}
fn default_noise_seed() -> u64 {
    1234
}
fn default_history() -> usize {
    1
}
fn default_split() -> f64 {
    0.75
}
fn default_simultaneous() -> usize {
    1
}

impl ExperimentConfig {
    pub fn backup_k(&self) -> usize {
        self.backup_k.unwrap_or(self.k)
    }

    pub fn routing_algo(&self) -> CliResult<RoutingAlgo> {
        match self.routing.as_str() {
            "edksp" => Ok(RoutingAlgo::Edksp),
            "ksp" => Ok(RoutingAlgo::Ksp),
            other => Err(CliError::Config(format!(
                "routing must be \"edksp\" or \"ksp\", got \"{other}\""
            ))),
        }
    }

    pub fn model_seed(&self) -> u64 {
        self.train.model_seed.unwrap_or(self.train.seed.wrapping_add(1))
    }

    /// Train/test sizes implied by `tm.count` and `train.split`.
    pub fn split_sizes(&self) -> (usize, usize) {
        let train = (self.train.split * self.tm.count as f64).floor() as usize;
        (train, self.tm.count - train)
    }

    fn validate(&self) -> CliResult<()> {
        let fail = |m: String| Err(CliError::Config(m));
        match (&self.topology.path, &self.topology.random) {
            (Some(_), Some(_)) => {
                return fail("topology: set either path or random, not both".into())
            }
            (None, None) => return fail("topology: set path or random".into()),
            _ => {}
        }
        if let Some(f) = &self.topology.format {
            if f != "edge_list" && f != "graphml" {
                return fail(format!(
                    "topology.format must be \"edge_list\" or \"graphml\", got \"{f}\""
                ));
            }
        }
        if let Some(r) = &self.topology.random {
            if r.nodes < 2 {
                return fail("topology.random.nodes must be at least 2".into());
            }
        }
        if self.k < 1 {
            return fail("k must be at least 1".into());
        }
        if self.backup_k() < 1 {
            return fail("backup_k must be at least 1".into());
        }
        self.routing_algo()?;
        match (self.tm.volume, &self.tm.calibrate) {
            (Some(_), Some(_)) => {
                return fail("tm: set either volume or calibrate, not both".into())
            }
            (None, None) => return fail("tm: set volume or calibrate".into()),
            (Some(v), None) => {
                if !(v.is_finite() && v > 0.0) {
                    return fail("tm.volume must be positive and finite".into());
                }
            }
            (None, Some(c)) => {
                if !(c.lo > 0.0 && c.lo <= c.target && c.target <= c.hi && c.hi.is_finite()) {
                    return fail("tm.calibrate requires 0 < lo <= target <= hi".into());
                }
            }
        }
        if let Some(s) = self.tm.walk_sigma {
            if !(s.is_finite() && s >= 0.0) {
                return fail("tm.walk_sigma must be finite and nonnegative".into());
            }
        }
        if let Some(r) = self.tm.walk_reversion {
            if self.tm.walk_sigma.is_none() {
                return fail("tm.walk_reversion requires tm.walk_sigma".into());
            }
            if !(0.0..=1.0).contains(&r) {
                return fail("tm.walk_reversion must lie in [0, 1]".into());
            }
        }
        if !(self.train.split > 0.0 && self.train.split < 1.0) {
            return fail("train.split must be strictly between 0 and 1".into());
        }
        if self.train.history < 1 {
            return fail("train.history must be at least 1".into());
        }
        if self.train.epochs < 1 {
            return fail("train.epochs must be at least 1".into());
        }
        if !(self.train.learning_rate.is_finite() && self.train.learning_rate > 0.0) {
            return fail("train.learning_rate must be positive and finite".into());
        }
        let (train_len, test_len) = self.split_sizes();
        if test_len == 0 {
            return fail(format!(
                "tm.count = {} with train.split = {} leaves zero test matrices",
                self.tm.count, self.train.split
            ));
        }
        if train_len < self.train.history + 1 {
            return fail(format!(
                "tm.count = {} with train.split = {} leaves {} training matrices; \
                 need at least history + 1 = {}",
                self.tm.count,
                self.train.split,
                train_len,
                self.train.history + 1
            ));
        }
        if self.scenarios.count < 1 {
            return fail("scenarios.count must be at least 1".into());
        }
        if self.scenarios.simultaneous < 1 {
            return fail("scenarios.simultaneous must be at least 1".into());
        }
        if self.regimes.is_empty() {
            return fail("regimes must be nonempty".into());
        }
        if self.betas.iter().any(|b| !(*b > 0.0 && *b < 1.0)) {
            return fail("betas must lie strictly between 0 and 1".into());
        }
        Ok(())
    }
}

/// Loads the config file, applies flag overrides, validates. The output
/// directory is checked separately because stat-only commands run without
/// one.
pub fn load(args: &ConfigArgs) -> CliResult<ExperimentConfig> {
    let text = fs::read_to_string(&args.config).map_err(|e| {
        CliError::Config(format!("cannot read {}: {e}", args.config.display()))
    })?;
    let mut cfg: ExperimentConfig = serde_json::from_str(&text).map_err(|e| {
        CliError::Config(format!("cannot parse {}: {e}", args.config.display()))
    })?;
    if let Some(k) = args.k {
        cfg.k = k;
    }
    if let Some(c) = args.tm_count {
        cfg.tm.count = c;
    }
    if let Some(s) = args.tm_seed {
        cfg.tm.seed = s;
    }
    if let Some(e) = args.epochs {
        cfg.train.epochs = e;
    }
    if let Some(lr) = args.learning_rate {
        cfg.train.learning_rate = lr;
    }
    if let Some(c) = args.scenario_count {
        cfg.scenarios.count = c;
    }
    if let Some(s) = args.scenario_seed {
        cfg.scenarios.seed = s;
    }
    if let Some(m) = args.simultaneous {
        cfg.scenarios.simultaneous = m;
    }
    if let Some(out) = &args.out {
        cfg.out = Some(out.clone());
    }
    cfg.validate()?;
    Ok(cfg)
}

pub fn require_out(cfg: &ExperimentConfig) -> CliResult<PathBuf> {
    cfg.out
        .clone()
        .ok_or_else(|| CliError::Config("no output directory: set out or pass --out".into()))
}

pub fn validate_alphas(alphas: &[f64]) -> CliResult<()> {
    if alphas.is_empty() {
        return Err(CliError::Config("alphas must be nonempty".into()));
    }
    if alphas.iter().any(|a| !(a.is_finite() && *a >= 0.0 && *a < 1.0)) {
        return Err(CliError::Config(
            "each alpha must lie in [0, 1)".into(),
        ));
    }
    Ok(())
}
