//! Traffic-engineering core: split-ratio configurations, link-load
//! accumulation under optional link failures, utilization reports, and
//! demand-volume calibration against the certified LP bound.

pub mod lp;

pub use lp::{lp_oracle, LpSolution, LP_GAP_TOL};

use serde::Serialize;

use crate::demand::DemandMatrix;
use crate::error::{Error, Result};
use crate::pathing::{pair_from_index, PathSet};
use crate::topology::{EdgeId, Topology};

/// Tolerance on each per-pair ratio sum when validating a configuration.
pub const SIMPLEX_TOL: f64 = 1e-9;

/// Per-pair traffic split ratios, aligned index-for-index with the pair's
/// routing path list. Every pair with at least one path carries a simplex
/// (nonnegative, summing to one within [`SIMPLEX_TOL`]).
#[derive(Debug, Clone, PartialEq)]
pub struct RatioConfig {
    ratios: Vec<Vec<f64>>,
}

impl RatioConfig {
    /// Equal split over each pair's paths.
    pub fn uniform(ps: &PathSet) -> Self {
        let ratios = (0..ps.num_pairs())
            .map(|idx| {
                let m = ps.routing_at(idx).len();
                vec![1.0 / m as f64; m]
            })
            .collect();
        RatioConfig { ratios }
    }

    /// Validates shape and simplex constraints against `ps`.
    pub fn new(ps: &PathSet, ratios: Vec<Vec<f64>>) -> Result<Self> {
        if ratios.len() != ps.num_pairs() {
            return Err(Error::Dimension(format!(
                "ratio config covers {} pairs, path set has {}",
                ratios.len(),
                ps.num_pairs()
            )));
        }
        for (idx, list) in ratios.iter().enumerate() {
            let paths = ps.routing_at(idx).len();
            if list.len() != paths {
                return Err(Error::Dimension(format!(
                    "pair {idx} has {} ratios for {paths} paths",
                    list.len()
                )));
            }
            if list.iter().any(|r| !r.is_finite() || *r < 0.0) {
                return Err(Error::Dimension(format!(
                    "pair {idx} has a negative or non-finite ratio"
                )));
            }
            if !list.is_empty() {
                let sum: f64 = list.iter().sum();
                if (sum - 1.0).abs() > SIMPLEX_TOL {
                    return Err(Error::Dimension(format!(
                        "pair {idx} ratios sum to {sum}, expected 1"
                    )));
                }
            }
        }
        Ok(RatioConfig { ratios })
    }

    /// Splits a flat per-path weight vector (in flat-offset order) into
    /// per-pair lists and validates it.
    pub fn from_flat(ps: &PathSet, flat: &[f64]) -> Result<Self> {
        let offsets = ps.flat_offsets();
        if flat.len() != *offsets.last().unwrap() {
            return Err(Error::Dimension(format!(
                "flat ratio vector has {} entries, path set has {} paths",
                flat.len(),
                offsets.last().unwrap()
            )));
        }
        let ratios = (0..ps.num_pairs())
            .map(|idx| flat[offsets[idx]..offsets[idx + 1]].to_vec())
            .collect();
        RatioConfig::new(ps, ratios)
    }

    pub fn at(&self, pair: usize) -> &[f64] {
        &self.ratios[pair]
    }

    pub fn num_pairs(&self) -> usize {
        self.ratios.len()
    }
}

/// A path set together with an optional set of failed links. Paths crossing
/// a failed link are dead; everything else is alive.
#[derive(Debug, Clone)]
pub struct PathSetView<'a> {
    ps: &'a PathSet,
    failed: Vec<bool>,
}

impl<'a> PathSetView<'a> {
    pub fn full(ps: &'a PathSet) -> Self {
        PathSetView {
            ps,
            failed: vec![false; ps.num_edges()],
        }
    }

    pub fn with_failures(ps: &'a PathSet, failed_edges: &[EdgeId]) -> Self {
        let mut failed = vec![false; ps.num_edges()];
        for &e in failed_edges {
            failed[e] = true;
        }
        PathSetView { ps, failed }
    }

    pub fn path_set(&self) -> &PathSet {
        self.ps
    }

    pub fn is_failed(&self, e: EdgeId) -> bool {
        self.failed[e]
    }

    pub fn failed_mask(&self) -> &[bool] {
        &self.failed
    }

    pub fn alive(&self, p: &crate::pathing::Path) -> bool {
        !p.crosses_any(&self.failed)
    }

    /// Number of surviving routing paths for a pair.
    pub fn alive_count(&self, pair: usize) -> usize {
        self.ps
            .routing_at(pair)
            .iter()
            .filter(|p| self.alive(p))
            .count()
    }
}

/// Accumulates per-link loads: each pair's volume times its per-path ratio,
/// added along every surviving path. Traffic assigned to dead paths is
/// simply absent (the no-reaction semantics); recovery strategies express
/// themselves by supplying adjusted ratios or extra loads.
pub fn compute_loads(
    t: &Topology,
    view: &PathSetView,
    dm: &DemandMatrix,
    rc: &RatioConfig,
) -> Result<Vec<f64>> {
    let ps = view.path_set();
    if dm.n() != ps.num_nodes() || dm.n() != t.num_nodes() {
        return Err(Error::Dimension(format!(
            "demand is {}x{} but topology has {} nodes",
            dm.n(),
            dm.n(),
            t.num_nodes()
        )));
    }
    if rc.num_pairs() != ps.num_pairs() {
        return Err(Error::Dimension(
            "ratio config does not match path set".into(),
        ));
    }
    let mut loads = vec![0.0; t.num_edges()];
    for pair in 0..ps.num_pairs() {
        let (s, d) = pair_from_index(ps.num_nodes(), pair);
        let volume = dm.get(s, d);
        if volume == 0.0 {
            continue;
        }
        for (p, &r) in ps.routing_at(pair).iter().zip(rc.at(pair)) {
            if r > 0.0 && view.alive(p) {
                for &e in p.edges() {
                    loads[e] += volume * r;
                }
            }
        }
    }
    Ok(loads)
}

/// Utilization report over one load vector.
#[derive(Debug, Clone, Serialize)]
pub struct MluReport {
    /// Maximum link utilization.
    pub mlu: f64,
    /// Smallest edge id attaining the maximum.
    pub argmax_edge: EdgeId,
    pub loads: Vec<f64>,
    pub utilization: Vec<f64>,
    /// Pairs with positive demand and no surviving routing path, with their
    /// stranded volumes.
    pub unrouted: Vec<(usize, usize, f64)>,
}

/// Computes loads and summarizes them into an [`MluReport`].
pub fn mlu_report(
    t: &Topology,
    view: &PathSetView,
    dm: &DemandMatrix,
    rc: &RatioConfig,
) -> Result<MluReport> {
    let loads = compute_loads(t, view, dm, rc)?;
    let utilization: Vec<f64> = loads
        .iter()
        .zip(t.edges())
        .map(|(l, e)| l / e.capacity)
        .collect();
    let (argmax_edge, mlu) = utilization
        .iter()
        .enumerate()
        .fold((0, f64::NEG_INFINITY), |(bi, bv), (i, &v)| {
            if v > bv {
                (i, v)
            } else {
                (bi, bv)
            }
        });
    let ps = view.path_set();
    let mut unrouted = Vec::new();
    for pair in 0..ps.num_pairs() {
        let (s, d) = pair_from_index(ps.num_nodes(), pair);
        let volume = dm.get(s, d);
        if volume > 0.0 && view.alive_count(pair) == 0 {
            unrouted.push((s, d, volume));
        }
    }
    Ok(MluReport {
        mlu,
        argmax_edge,
        loads,
        utilization,
        unrouted,
    })
}

/// Ratio of a candidate utilization to the certified optimum. Both zero
/// means the candidate is trivially optimal; a positive candidate against a
/// zero optimum has no meaningful ratio and is rejected.
pub fn normalized_mlu(candidate: f64, oracle: f64) -> Result<f64> {
    if oracle == 0.0 {
        if candidate == 0.0 {
            return Ok(1.0);
        }
        return Err(Error::Unsolvable(
            "cannot normalize a positive utilization by a zero optimum".into(),
        ));
    }
    Ok(candidate / oracle)
}

/// Outcome of [`calibrate_volume`].
#[derive(Debug, Clone, Serialize)]
pub struct CalibratedVolume {
    /// Total demand volume to use.
    pub volume: f64,
    /// Optimal utilization achieved at that volume.
    pub mlu: f64,
    /// LP solves spent.
    pub probes: usize,
}

/// Finds a total demand volume whose optimal utilization lands inside
/// `[lo, hi]`, aiming at `target`. Utilization scales linearly with volume,
/// so one probe solve seeds the answer; a bisection loop backs it up against
/// numerical drift.
pub fn calibrate_volume(
    t: &Topology,
    ps: &PathSet,
    probe: &DemandMatrix,
    target: f64,
    lo: f64,
    hi: f64,
) -> Result<CalibratedVolume> {
    if !(0.0 < lo && lo <= target && target <= hi) {
        return Err(Error::Dimension(format!(
            "calibration band [{lo}, {hi}] with target {target} is not ordered"
        )));
    }
    let view = PathSetView::full(ps);
    let base_total = probe.total();
    if base_total <= 0.0 {
        return Err(Error::Unsolvable("probe demand is all zero".into()));
    }
    let mut probes = 1;
    let theta0 = lp_oracle(t, &view, probe)?.mlu;
    if theta0 <= 0.0 {
        return Err(Error::Unsolvable(
            "probe demand produces zero utilization".into(),
        ));
    }
    let seed = target / theta0;
    let check = |alpha: f64, probes: &mut usize| -> Result<f64> {
        *probes += 1;
        Ok(lp_oracle(t, &view, &probe.scaled(alpha))?.mlu)
    };
    let theta = check(seed, &mut probes)?;
    if (lo..=hi).contains(&theta) {
        return Ok(CalibratedVolume {
            volume: base_total * seed,
            mlu: theta,
            probes,
        });
    }
    let (mut a, mut b) = (seed * 0.25, seed * 4.0);
    for _ in 0..48 {
        let mid = 0.5 * (a + b);
        let theta = check(mid, &mut probes)?;
        if (lo..=hi).contains(&theta) {
            return Ok(CalibratedVolume {
                volume: base_total * mid,
                mlu: theta,
                probes,
            });
        }
        if theta < target {
            a = mid;
        } else {
            b = mid;
        }
    }
    Err(Error::Unsolvable(
        "volume calibration failed to enter the target band".into(),
    ))
}
