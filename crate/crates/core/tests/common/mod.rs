//! Shared fixtures and independent oracles for the integration suites.
//!
//! The oracles here deliberately re-derive results by brute force (grid
//! enumeration over the ratio simplex and exhaustive expansion of detour
//! choices) so the closed-form implementations are checked against code
//! that shares none of their structure.

#![allow(dead_code)]

use pathweave::demand::DemandMatrix;
use pathweave::pathing::{pair_from_index, PathSet};
use pathweave::te::RatioConfig;
use pathweave::topology::{parse_edge_list, EdgeId, Topology};

/// The 11-node walkthrough network: a long northern chain S1..S5, a southern
/// mesh through S2/S3, and twin detour nodes S10/S11 between S7, S6 and S4.
/// Node ids by first appearance: S1=0, S9=1, S8=2, S7=3, S6=4, S5=5, S10=6,
/// S11=7, S2=8, S3=9, S4=10.
pub fn golden_topology() -> Topology {
    parse_edge_list(
        include_str!("../../../../data/illustrative.edgelist"),
        "illustrative",
    )
    .unwrap()
}

/// The walkthrough tunnel plan: four tunnels from S1 to S5 at 25% each, and
/// two detours protecting link (S7, S6). Built through the JSON interface so
/// the paths get full validation against the topology.
pub fn golden_path_set(t: &Topology) -> PathSet {
    let json = r#"{
        "k": 4,
        "routing": [
            {
                "src": 0,
                "dst": 5,
                "paths": [
                    [0, 1, 2, 3, 4, 5],
                    [0, 8, 9, 6, 10, 5],
                    [0, 8, 9, 7, 10, 5],
                    [0, 1, 2, 3, 6, 10, 5]
                ]
            }
        ],
        "backup": [
            {
                "edge": [3, 4],
                "paths": [
                    [3, 6, 4],
                    [3, 7, 4]
                ]
            }
        ]
    }"#;
    PathSet::from_json(json, t).unwrap()
}

/// Demand of 1.2 from S1 to S5 split 25% per tunnel.
pub fn golden_traffic(t: &Topology, ps: &PathSet) -> (DemandMatrix, RatioConfig) {
    let mut dm = DemandMatrix::zeros(t.num_nodes());
    dm.set(0, 5, 1.2);
    let mut lists: Vec<Vec<f64>> = (0..ps.num_pairs()).map(|_| Vec::new()).collect();
    lists[pathweave::pathing::pair_index(t.num_nodes(), 0, 5)] = vec![0.25; 4];
    let rc = RatioConfig::new(ps, lists).unwrap();
    (dm, rc)
}

/// All compositions of `units` into `parts` nonnegative integers, i.e. every
/// grid point of the (parts-1)-simplex at resolution 1/units.
fn compositions(units: usize, parts: usize) -> Vec<Vec<usize>> {
    fn go(units: usize, parts: usize, prefix: &mut Vec<usize>, out: &mut Vec<Vec<usize>>) {
        if parts == 1 {
            prefix.push(units);
            out.push(prefix.clone());
            prefix.pop();
            return;
        }
        for take in 0..=units {
            prefix.push(take);
            go(units - take, parts - 1, prefix, out);
            prefix.pop();
        }
    }
    let mut out = Vec::new();
    go(units, parts, &mut Vec::new(), &mut out);
    out
}

/// Brute-force minimum of the maximum utilization over a ratio grid with the
/// given step, for up to two positive-demand pairs. Completely independent
/// of the LP path: it never forms a linear program, it just evaluates the
/// objective on every grid point.
pub fn grid_search_mlu(t: &Topology, ps: &PathSet, dm: &DemandMatrix, step: f64) -> f64 {
    let units = (1.0 / step).round() as usize;
    let n = ps.num_nodes();
    let mut active: Vec<(usize, f64)> = Vec::new();
    for pair in 0..ps.num_pairs() {
        let (s, d) = pair_from_index(n, pair);
        if dm.get(s, d) > 0.0 {
            active.push((pair, dm.get(s, d)));
        }
    }
    assert!(active.len() <= 2, "grid oracle is sized for at most two pairs");
    if active.is_empty() {
        return 0.0;
    }
    // Per pair, the load vector of every grid point.
    let mut tables: Vec<Vec<Vec<f64>>> = Vec::new();
    for &(pair, volume) in &active {
        let paths = ps.routing_at(pair);
        assert!(!paths.is_empty(), "positive demand needs at least one path");
        let mut table = Vec::new();
        for combo in compositions(units, paths.len()) {
            let mut loads = vec![0.0; t.num_edges()];
            for (p, &g) in paths.iter().zip(&combo) {
                let w = volume * g as f64 / units as f64;
                for &e in p.edges() {
                    loads[e] += w;
                }
            }
            table.push(loads);
        }
        tables.push(table);
    }
    let caps: Vec<f64> = t.edges().iter().map(|e| e.capacity).collect();
    let max_util = |a: &[f64], b: Option<&[f64]>| -> f64 {
        let mut worst = 0.0_f64;
        for e in 0..caps.len() {
            let load = a[e] + b.map_or(0.0, |b| b[e]);
            worst = worst.max(load / caps[e]);
        }
        worst
    };
    let mut best = f64::INFINITY;
    if tables.len() == 1 {
        for a in &tables[0] {
            best = best.min(max_util(a, None));
        }
    } else {
        for a in &tables[0] {
            for b in &tables[1] {
                best = best.min(max_util(a, Some(b)));
            }
        }
    }
    best
}

/// Exhaustive-expansion reference for the weave strategy.
///
/// Instead of accumulating marginal detour shares, this enumerates every
/// combination of detour choices a packet could take (the full product over
/// the path's failed links), weights each combination by the product of the
/// uniform choice probabilities, and walks it edge by edge. Fallback
/// semantics mirror the contract: a dead path with a detour-less failed link
/// is rerouted onto the pair's surviving paths by renormalized ratio (even
/// split when the surviving ratios are all zero), and dropped when nothing
/// survives.
pub fn weave_expansion_loads(
    t: &Topology,
    ps: &PathSet,
    failed_edges: &[EdgeId],
    dm: &DemandMatrix,
    rc: &RatioConfig,
) -> Vec<f64> {
    let mut failed = vec![false; t.num_edges()];
    for &e in failed_edges {
        failed[e] = true;
    }
    let mut loads = vec![0.0; t.num_edges()];
    for pair in 0..ps.num_pairs() {
        let (s, d) = pair_from_index(ps.num_nodes(), pair);
        let volume = dm.get(s, d);
        if volume == 0.0 {
            continue;
        }
        let paths = ps.routing_at(pair);
        let ratios = rc.at(pair);
        let mut pool = 0.0;
        for (p, &r) in paths.iter().zip(ratios) {
            let w = volume * r;
            if w == 0.0 {
                continue;
            }
            if !p.edges().iter().any(|&e| failed[e]) {
                for &e in p.edges() {
                    loads[e] += w;
                }
                continue;
            }
            // Candidate detours per failed hop, in hop order.
            let hops: Vec<EdgeId> = p.edges().to_vec();
            let mut choice_sets: Vec<Vec<&pathweave::pathing::Path>> = Vec::new();
            for &e in &hops {
                if failed[e] {
                    let cands: Vec<&pathweave::pathing::Path> = ps
                        .backup(e)
                        .iter()
                        .filter(|b| !b.edges().iter().any(|&be| failed[be]))
                        .collect();
                    choice_sets.push(cands);
                }
            }
            if choice_sets.iter().any(|c| c.is_empty()) {
                pool += w;
                continue;
            }
            // Walk every combination of choices.
            let mut combo = vec![0usize; choice_sets.len()];
            loop {
                let prob: f64 = combo
                    .iter()
                    .zip(&choice_sets)
                    .map(|(_, set)| 1.0 / set.len() as f64)
                    .product();
                let mut pick = 0;
                for &e in &hops {
                    if failed[e] {
                        for &be in choice_sets[pick][combo[pick]].edges() {
                            loads[be] += w * prob;
                        }
                        pick += 1;
                    } else {
                        loads[e] += w * prob;
                    }
                }
                // Odometer increment over the choice sets.
                let mut pos = 0;
                loop {
                    if pos == combo.len() {
                        break;
                    }
                    combo[pos] += 1;
                    if combo[pos] < choice_sets[pos].len() {
                        break;
                    }
                    combo[pos] = 0;
                    pos += 1;
                }
                if pos == combo.len() {
                    break;
                }
            }
        }
        if pool > 0.0 {
            let alive: Vec<usize> = (0..paths.len())
                .filter(|&i| !paths[i].edges().iter().any(|&e| failed[e]))
                .collect();
            if alive.is_empty() {
                continue;
            }
            let total_ratio: f64 = alive.iter().map(|&i| ratios[i]).sum();
            for &i in &alive {
                let share = if total_ratio > 0.0 {
                    pool * ratios[i] / total_ratio
                } else {
                    pool / alive.len() as f64
                };
                for &e in paths[i].edges() {
                    loads[e] += share;
                }
            }
        }
    }
    loads
}

/// Componentwise closeness with a relative floor, for comparing load
/// vectors produced by different summation orders.
pub fn loads_close(a: &[f64], b: &[f64], tol: f64) -> bool {
    a.len() == b.len()
        && a.iter()
            .zip(b)
            .all(|(x, y)| (x - y).abs() <= tol * x.abs().max(y.abs()).max(1.0))
}
