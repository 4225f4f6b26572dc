//! Linear-programming optimum of the path-based load-balancing problem,
//! certified independently of the solver.
//!
//! The raw solver output is never trusted. The primal split ratios are
//! clipped back onto the simplex and re-evaluated with our own load
//! accumulation, a dual witness is rescaled until its normalization holds
//! exactly, and the two resulting true objective values must close to within
//! [`LP_GAP_TOL`] before a solution is returned.

use microlp::{ComparisonOp, OptimizationDirection, Problem, SolveOutcome, Variable};

use crate::demand::DemandMatrix;
use crate::error::{Error, Result};
use crate::pathing::pair_from_index;
use crate::te::{compute_loads, PathSetView, RatioConfig};
use crate::topology::Topology;

/// Relative duality-gap tolerance for accepting an LP solution.
pub const LP_GAP_TOL: f64 = 1e-6;

/// Certified optimum: a feasible ratio configuration, its true utilization,
/// and a matching dual lower bound.
#[derive(Debug, Clone)]
pub struct LpSolution {
    /// True maximum utilization of `ratios` (also the certified optimum, up
    /// to [`LP_GAP_TOL`]).
    pub mlu: f64,
    /// Weak-duality lower bound on any achievable utilization.
    pub lower_bound: f64,
    /// `mlu - lower_bound`, guaranteed within tolerance.
    pub gap: f64,
    pub ratios: RatioConfig,
    pub loads: Vec<f64>,
}

struct ActivePair {
    pair: usize,
    volume: f64,
    /// Indices of surviving paths within the pair's routing list.
    alive: Vec<usize>,
}

fn solve(p: Problem) -> Result<microlp::Solution> {
    match p.solve() {
        Ok(SolveOutcome::Solution(s)) => Ok(s),
        Ok(_) => Err(Error::Unsolvable("solver gave up before optimality".into())),
        Err(e) => Err(Error::Unsolvable(format!("solver rejected the program: {e}"))),
    }
}

/// Optimal split ratios for `dm` over the surviving paths in `view`,
/// minimizing maximum link utilization.
///
/// Zero-demand pairs get uniform ratios. Pairs with positive demand and no
/// surviving path make the instance infeasible and are reported in the
/// error.
pub fn lp_oracle(t: &Topology, view: &PathSetView, dm: &DemandMatrix) -> Result<LpSolution> {
    let ps = view.path_set();
    if dm.n() != ps.num_nodes() || dm.n() != t.num_nodes() {
        return Err(Error::Dimension(format!(
            "demand is {}x{} but topology has {} nodes",
            dm.n(),
            dm.n(),
            t.num_nodes()
        )));
    }
    let mut active = Vec::new();
    let mut stranded = Vec::new();
    for pair in 0..ps.num_pairs() {
        let (s, d) = pair_from_index(ps.num_nodes(), pair);
        let volume = dm.get(s, d);
        if volume <= 0.0 {
            continue;
        }
        let alive: Vec<usize> = ps
            .routing_at(pair)
            .iter()
            .enumerate()
            .filter(|(_, p)| view.alive(p))
            .map(|(i, _)| i)
            .collect();
        if alive.is_empty() {
            stranded.push((s, d));
        } else {
            active.push(ActivePair {
                pair,
                volume,
                alive,
            });
        }
    }
    if !stranded.is_empty() {
        return Err(Error::NoUsablePath(stranded));
    }
    let uniform = RatioConfig::uniform(ps);
    if active.is_empty() {
        return Ok(LpSolution {
            mlu: 0.0,
            lower_bound: 0.0,
            gap: 0.0,
            ratios: uniform,
            loads: vec![0.0; t.num_edges()],
        });
    }

    // Primal: min theta subject to per-pair simplexes and per-link loads
    // bounded by theta times capacity.
    let mut prob = Problem::new(OptimizationDirection::Minimize);
    let theta = prob.add_var(1.0, (0.0, f64::INFINITY));
    let lambda: Vec<Vec<Variable>> = active
        .iter()
        .map(|ap| {
            ap.alive
                .iter()
                .map(|_| prob.add_var(0.0, (0.0, 1.0)))
                .collect()
        })
        .collect();
    for vars in &lambda {
        let terms: Vec<(Variable, f64)> = vars.iter().map(|&v| (v, 1.0)).collect();
        prob.add_constraint(&terms[..], ComparisonOp::Eq, 1.0);
    }
    let mut per_edge: Vec<Vec<(Variable, f64)>> = vec![Vec::new(); t.num_edges()];
    for (ap, vars) in active.iter().zip(&lambda) {
        let paths = ps.routing_at(ap.pair);
        for (&pi, &v) in ap.alive.iter().zip(vars) {
            for &e in paths[pi].edges() {
                per_edge[e].push((v, ap.volume));
            }
        }
    }
    for (e, mut terms) in per_edge.into_iter().enumerate() {
        if terms.is_empty() {
            continue;
        }
        terms.push((theta, -t.edge(e).capacity));
        prob.add_constraint(&terms[..], ComparisonOp::Le, 0.0);
    }
    let primal = solve(prob)?;

    // Rebuild a feasible primal point: clip, renormalize, re-evaluate.
    let mut ratios: Vec<Vec<f64>> = (0..ps.num_pairs())
        .map(|pair| uniform.at(pair).to_vec())
        .collect();
    for (ap, vars) in active.iter().zip(&lambda) {
        let raw: Vec<f64> = vars.iter().map(|&v| primal[v].max(0.0)).collect();
        let sum: f64 = raw.iter().sum();
        let mut list = vec![0.0; ps.routing_at(ap.pair).len()];
        if sum > 0.0 {
            for (&pi, &w) in ap.alive.iter().zip(&raw) {
                list[pi] = w / sum;
            }
        } else {
            for &pi in &ap.alive {
                list[pi] = 1.0 / ap.alive.len() as f64;
            }
        }
        ratios[ap.pair] = list;
    }
    let ratios = RatioConfig::new(ps, ratios)?;
    let loads = compute_loads(t, view, dm, &ratios)?;
    let mlu = loads
        .iter()
        .zip(t.edges())
        .map(|(l, e)| l / e.capacity)
        .fold(0.0, f64::max);

    // Dual: max sum of volume-weighted shortest path lengths under
    // y-weights, with capacity-weighted y summing to one.
    let mut dual = Problem::new(OptimizationDirection::Maximize);
    let y: Vec<Variable> = (0..t.num_edges())
        .map(|_| dual.add_var(0.0, (0.0, f64::INFINITY)))
        .collect();
    let z: Vec<Variable> = active
        .iter()
        .map(|ap| dual.add_var(ap.volume, (0.0, f64::INFINITY)))
        .collect();
    for (ap, &zv) in active.iter().zip(&z) {
        let paths = ps.routing_at(ap.pair);
        for &pi in &ap.alive {
            let mut terms: Vec<(Variable, f64)> = vec![(zv, 1.0)];
            terms.extend(paths[pi].edges().iter().map(|&e| (y[e], -1.0)));
            dual.add_constraint(&terms[..], ComparisonOp::Le, 0.0);
        }
    }
    let norm: Vec<(Variable, f64)> = y
        .iter()
        .enumerate()
        .map(|(e, &v)| (v, t.edge(e).capacity))
        .collect();
    dual.add_constraint(&norm[..], ComparisonOp::Eq, 1.0);
    let dual_sol = solve(dual)?;

    // Rebuild a feasible dual witness: clip, rescale the normalization to
    // hold exactly, then recompute every shortest length ourselves.
    let mut weights: Vec<f64> = y.iter().map(|&v| dual_sol[v].max(0.0)).collect();
    let scale: f64 = weights
        .iter()
        .enumerate()
        .map(|(e, w)| w * t.edge(e).capacity)
        .sum();
    let lower_bound = if scale <= 0.0 {
        0.0
    } else {
        for w in &mut weights {
            *w /= scale;
        }
        active
            .iter()
            .map(|ap| {
                let paths = ps.routing_at(ap.pair);
                let shortest = ap
                    .alive
                    .iter()
                    .map(|&pi| paths[pi].edges().iter().map(|&e| weights[e]).sum::<f64>())
                    .fold(f64::INFINITY, f64::min);
                ap.volume * shortest
            })
            .sum()
    };

    let gap = mlu - lower_bound;
    let slack = LP_GAP_TOL * mlu.max(1.0);
    if gap < -slack {
        return Err(Error::Unsolvable(format!(
            "dual bound {lower_bound} exceeds primal value {mlu}"
        )));
    }
    if gap > slack {
        return Err(Error::Unsolvable(format!(
            "duality gap {gap:.3e} exceeds tolerance at utilization {mlu}"
        )));
    }
    Ok(LpSolution {
        mlu,
        lower_bound,
        gap,
        ratios,
        loads,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::demand::DemandMatrix;
    use crate::pathing::build_path_set;
    use crate::te::mlu_report;
    use crate::topology::parse_edge_list;

    #[test]
    fn square_balances_evenly() {
        let t = parse_edge_list("a b\nb c\nc d\nd a\n", "t").unwrap();
        let ps = build_path_set(&t, 4).unwrap();
        let view = PathSetView::full(&ps);
        let mut dm = DemandMatrix::zeros(4);
        dm.set(0, 2, 2.0);
        let sol = lp_oracle(&t, &view, &dm).unwrap();
        // Two disjoint two-hop paths, demand 2, unit caps: optimal is an
        // even split with every link carrying 1.0.
        assert!((sol.mlu - 1.0).abs() <= 1e-9);
        assert!(sol.gap.abs() <= LP_GAP_TOL * 1.0_f64.max(sol.mlu));
        let r = sol.ratios.at(crate::pathing::pair_index(4, 0, 2));
        assert_eq!(r.len(), 2);
        assert!((r[0] - 0.5).abs() <= 1e-6 && (r[1] - 0.5).abs() <= 1e-6);
    }

    #[test]
    fn single_path_forces_full_load() {
        // Path graph a-b-c: one route for (a, c), demand 3, caps 1.
        let t = parse_edge_list("a b\nb c\n", "t").unwrap();
        let ps = build_path_set(&t, 4).unwrap();
        let view = PathSetView::full(&ps);
        let mut dm = DemandMatrix::zeros(3);
        dm.set(0, 2, 3.0);
        let sol = lp_oracle(&t, &view, &dm).unwrap();
        assert!((sol.mlu - 3.0).abs() <= 3.0 * 1e-9);
        assert!((sol.lower_bound - sol.mlu).abs() <= LP_GAP_TOL * sol.mlu.max(1.0));
    }

    #[test]
    fn zero_demand_solves_trivially() {
        let t = parse_edge_list("a b\nb c\nc a\n", "t").unwrap();
        let ps = build_path_set(&t, 2).unwrap();
        let view = PathSetView::full(&ps);
        let dm = DemandMatrix::zeros(3);
        let sol = lp_oracle(&t, &view, &dm).unwrap();
        assert_eq!((sol.mlu, sol.lower_bound, sol.gap), (0.0, 0.0, 0.0));
        assert_eq!(sol.loads, vec![0.0; 3]);
    }

    #[test]
    fn stranded_pair_is_reported() {
        let t = parse_edge_list("a b\nb c\n", "t").unwrap();
        let ps = build_path_set(&t, 4).unwrap();
        let failed = t.edge_between(0, 1).unwrap();
        let view = PathSetView::with_failures(&ps, &[failed]);
        let mut dm = DemandMatrix::zeros(3);
        dm.set(0, 2, 1.0);
        match lp_oracle(&t, &view, &dm) {
            Err(Error::NoUsablePath(pairs)) => assert_eq!(pairs, vec![(0, 2)]),
            other => panic!("expected NoUsablePath, got {other:?}"),
        }
    }

    #[test]
    fn reported_ratios_reproduce_reported_mlu() {
        let t = crate::topology::random_connected(9, 8, 3);
        let ps = build_path_set(&t, 3).unwrap();
        let view = PathSetView::full(&ps);
        let dm = crate::demand::gravity_from_masses(
            &(1..=9).map(f64::from).collect::<Vec<_>>(),
            50.0,
        )
        .unwrap();
        let sol = lp_oracle(&t, &view, &dm).unwrap();
        let report = mlu_report(&t, &view, &dm, &sol.ratios).unwrap();
        assert_eq!(report.mlu, sol.mlu);
        assert_eq!(report.loads, sol.loads);
        // The optimum can only improve on the uniform split.
        let uniform = mlu_report(&t, &view, &dm, &RatioConfig::uniform(&ps)).unwrap();
        assert!(sol.mlu <= uniform.mlu + 1e-9);
    }
}
