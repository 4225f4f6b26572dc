//! Link-failure scenarios and recovery strategies.
//!
//! Three reactions to a set of failed links are modeled, from least to most
//! capable:
//!
//! * no reaction: traffic on a dead path is lost;
//! * source reroute: each pair shifts its dead-path traffic onto its own
//!   surviving paths, renormalizing the split ratios;
//! * weave: a dead path detours around every failed link it crosses using
//!   that link's backup paths, splitting evenly over the detours that
//!   survive, and rejoins its original tail. A path that hits a failed link
//!   with no surviving detour falls back to source rerouting, and traffic
//!   with no surviving path at all is dropped.
//!
//! Weaving is evaluated in expectation: with several surviving detours the
//! split is uniform, so each detour edge carries its share of the path's
//! weight while the segments before, between, and after failed links carry
//! the full weight. Composite walks may revisit edges; loads simply add.

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::demand::DemandMatrix;
use crate::error::{Error, Result};
use crate::pathing::{pair_from_index, PathSet};
use crate::te::{PathSetView, RatioConfig};
use crate::topology::{EdgeId, Topology};

/// A weighted set of simultaneously failed links.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FailureScenario {
    pub failed_edges: Vec<EdgeId>,
    pub weight: f64,
}

/// How traffic reacts to the failures.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Strategy {
    NoReaction,
    SourceReroute,
    Weave,
}

impl Strategy {
    pub fn name(self) -> &'static str {
        match self {
            Strategy::NoReaction => "no_reaction",
            Strategy::SourceReroute => "source_reroute",
            Strategy::Weave => "weave",
        }
    }
}

/// Loads and volume accounting after applying one strategy to one scenario.
/// The four buckets partition the total demand exactly.
#[derive(Debug, Clone, Serialize)]
pub struct RecoveryOutcome {
    pub strategy: Strategy,
    pub loads: Vec<f64>,
    pub mlu: f64,
    pub argmax_edge: EdgeId,
    /// Demand delivered on its originally planned paths.
    pub delivered_planned: f64,
    /// Demand delivered through backup detours.
    pub weaved: f64,
    /// Demand delivered after renormalizing onto surviving paths.
    pub rerouted: f64,
    /// Demand with no surviving path.
    pub dropped: f64,
    pub total_demand: f64,
    /// Pairs that lost volume entirely, with the lost amount.
    pub dropped_pairs: Vec<(usize, usize, f64)>,
}

/// Surviving backup detours of `e`, given the failure mask.
fn surviving_backups<'a>(ps: &'a PathSet, e: EdgeId, failed: &[bool]) -> Vec<&'a crate::pathing::Path> {
    ps.backup(e)
        .iter()
        .filter(|b| !b.crosses_any(failed))
        .collect()
}

/// Applies `strategy` to `scenario_edges` and accounts for every unit of
/// demand.
pub fn recover(
    t: &Topology,
    ps: &PathSet,
    scenario_edges: &[EdgeId],
    dm: &DemandMatrix,
    rc: &RatioConfig,
    strategy: Strategy,
) -> Result<RecoveryOutcome> {
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
    for &e in scenario_edges {
        if e >= t.num_edges() {
            return Err(Error::Dimension(format!("failed edge {e} out of range")));
        }
    }
    let view = PathSetView::with_failures(ps, scenario_edges);
    let failed = view.failed_mask();
    let mut loads = vec![0.0; t.num_edges()];
    let mut delivered_planned = 0.0;
    let mut weaved = 0.0;
    let mut rerouted = 0.0;
    let mut dropped = 0.0;
    let mut total = 0.0;
    let mut dropped_pairs = Vec::new();

    for pair in 0..ps.num_pairs() {
        let (s, d) = pair_from_index(ps.num_nodes(), pair);
        let volume = dm.get(s, d);
        total += volume;
        if volume == 0.0 {
            continue;
        }
        let paths = ps.routing_at(pair);
        let ratios = rc.at(pair);
        let mut pool = 0.0;
        let mut pair_dropped = 0.0;
        for (p, &r) in paths.iter().zip(ratios) {
            let w = volume * r;
            if w == 0.0 {
                continue;
            }
            if !p.crosses_any(failed) {
                delivered_planned += w;
                for &e in p.edges() {
                    loads[e] += w;
                }
                continue;
            }
            match strategy {
                Strategy::NoReaction => pair_dropped += w,
                Strategy::SourceReroute => pool += w,
                Strategy::Weave => {
                    let weavable = p
                        .edges()
                        .iter()
                        .filter(|&&e| failed[e])
                        .all(|&e| !surviving_backups(ps, e, failed).is_empty());
                    if !weavable {
                        pool += w;
                        continue;
                    }
                    for &e in p.edges() {
                        if failed[e] {
                            let cands = surviving_backups(ps, e, failed);
                            let share = w / cands.len() as f64;
                            for b in cands {
                                for &be in b.edges() {
                                    loads[be] += share;
                                }
                            }
                        } else {
                            loads[e] += w;
                        }
                    }
                    weaved += w;
                }
            }
        }
        if pool > 0.0 {
            let alive: Vec<usize> = (0..paths.len())
                .filter(|&i| !paths[i].crosses_any(failed))
                .collect();
            if alive.is_empty() {
                pair_dropped += pool;
            } else {
                let surviving_weight: f64 = alive.iter().map(|&i| ratios[i]).sum();
                for &i in &alive {
                    let share = if surviving_weight > 0.0 {
                        pool * ratios[i] / surviving_weight
                    } else {
                        pool / alive.len() as f64
                    };
                    for &e in paths[i].edges() {
                        loads[e] += share;
                    }
                }
                rerouted += pool;
            }
        }
        if pair_dropped > 0.0 {
            dropped += pair_dropped;
            dropped_pairs.push((s, d, pair_dropped));
        }
    }

    let accounted = delivered_planned + weaved + rerouted + dropped;
    assert!(
        (accounted - total).abs() <= 1e-9 * total.max(1.0),
        "volume accounting drifted: {accounted} vs {total}"
    );
    let mut argmax_edge = 0;
    let mut mlu = f64::NEG_INFINITY;
    for e in 0..t.num_edges() {
        let u = loads[e] / t.edge(e).capacity;
        if u > mlu {
            mlu = u;
            argmax_edge = e;
        }
    }
    Ok(RecoveryOutcome {
        strategy,
        loads,
        mlu,
        argmax_edge,
        delivered_planned,
        weaved,
        rerouted,
        dropped,
        total_demand: total,
        dropped_pairs,
    })
}

/// Applies one strategy across many scenarios (in parallel, results in
/// scenario order).
pub fn evaluate_scenarios(
    t: &Topology,
    ps: &PathSet,
    dm: &DemandMatrix,
    rc: &RatioConfig,
    scenarios: &[FailureScenario],
    strategy: Strategy,
) -> Result<Vec<RecoveryOutcome>> {
    scenarios
        .par_iter()
        .map(|sc| recover(t, ps, &sc.failed_edges, dm, rc, strategy))
        .collect()
}

/// Scenario sample plus how many draws were rejected for disconnecting the
/// topology.
#[derive(Debug, Clone)]
pub struct ScenarioSample {
    pub scenarios: Vec<FailureScenario>,
    pub resamples: usize,
}

/// Draws `count` equally weighted scenarios of `edges_per_scenario` distinct
/// links each, rejecting (and counting) draws that disconnect the topology.
pub fn sample_scenarios(
    t: &Topology,
    count: usize,
    edges_per_scenario: usize,
    seed: u64,
) -> Result<ScenarioSample> {
    if count == 0 {
        return Err(Error::Dimension("scenario count must be positive".into()));
    }
    if edges_per_scenario == 0 || edges_per_scenario >= t.num_edges() {
        return Err(Error::Dimension(format!(
            "cannot fail {edges_per_scenario} of {} links",
            t.num_edges()
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let budget = 1000 * count;
    let mut resamples = 0;
    let mut scenarios = Vec::with_capacity(count);
    let weight = 1.0 / count as f64;
    while scenarios.len() < count {
        let mut edges = Vec::with_capacity(edges_per_scenario);
        while edges.len() < edges_per_scenario {
            let e = rng.random_range(0..t.num_edges());
            if !edges.contains(&e) {
                edges.push(e);
            }
        }
        edges.sort_unstable();
        if t.connected_without(&edges) {
            scenarios.push(FailureScenario {
                failed_edges: edges,
                weight,
            });
        } else {
            resamples += 1;
            if resamples > budget {
                return Err(Error::Unsolvable(format!(
                    "rejected {resamples} scenario draws; topology too fragile for \
                     {edges_per_scenario}-link failures"
                )));
            }
        }
    }
    Ok(ScenarioSample {
        scenarios,
        resamples,
    })
}

/// Every single-link failure that keeps the topology connected, equally
/// weighted.
pub fn all_single_link_scenarios(t: &Topology) -> Vec<FailureScenario> {
    let survivable: Vec<EdgeId> = (0..t.num_edges())
        .filter(|&e| !t.is_bridge(e))
        .collect();
    let weight = 1.0 / survivable.len().max(1) as f64;
    survivable
        .into_iter()
        .map(|e| FailureScenario {
            failed_edges: vec![e],
            weight,
        })
        .collect()
}
