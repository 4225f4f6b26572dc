//! Randomized invariant checks over generated topologies and demand.
//!
//! Case counts are kept modest per property; the generators lean on the
//! crate's own seeded topology builder so every failure reproduces from the
//! printed `(n, extra, seed)` triple.

use std::collections::{HashSet, VecDeque};

use proptest::prelude::*;

use pathweave::demand::{gravity, gravity_series, perturb};
use pathweave::failure::{recover, sample_scenarios, Strategy};
use pathweave::metrics::{perc_loss, LossRecord};
use pathweave::pathing::{build_path_set, edge_risk, edksp, ksp, pair_from_index, PathSet};
use pathweave::te::{compute_loads, lp_oracle, PathSetView, RatioConfig};
use pathweave::topology::{parse_edge_list, random_connected, Topology};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Plain breadth-first hop distances, written independently of the pathing
/// module's destination-rooted search.
fn bfs_hops(t: &Topology, s: usize) -> Vec<Option<usize>> {
    let mut dist = vec![None; t.num_nodes()];
    dist[s] = Some(0);
    let mut q = VecDeque::from([s]);
    while let Some(x) = q.pop_front() {
        for &(y, _) in t.neighbors(x) {
            if dist[y].is_none() {
                dist[y] = Some(dist[x].unwrap() + 1);
                q.push_back(y);
            }
        }
    }
    dist
}

fn topo(n: usize, extra: usize, seed: u64) -> Topology {
    random_connected(n, extra, seed)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn edge_list_serialization_is_a_fixed_point(
        n in 3usize..10, extra in 0usize..8, seed in any::<u64>()
    ) {
        let t = topo(n, extra, seed);
        let text = t.to_edge_list();
        let back = parse_edge_list(&text, "roundtrip").unwrap();
        prop_assert_eq!(back.num_nodes(), t.num_nodes());
        prop_assert_eq!(back.num_edges(), t.num_edges());
        prop_assert_eq!(back.to_edge_list(), text);
    }

    #[test]
    fn pruning_keeps_a_two_core_or_reports_collapse(
        n in 3usize..12, extra in 0usize..8, seed in any::<u64>()
    ) {
        let t = topo(n, extra, seed);
        match t.prune_degree_one() {
            Err(_) => {
                // Only a forest can collapse completely, and the generator
                // always returns a connected graph, so: a tree.
                prop_assert_eq!(t.num_edges(), t.num_nodes() - 1);
            }
            Ok(pruned) => {
                let core = &pruned.topology;
                prop_assert!(core.is_connected());
                for v in 0..core.num_nodes() {
                    prop_assert!(core.degree(v) >= 2, "node {} kept at degree < 2", v);
                }
                // Idempotent: a second pass removes nothing.
                let again = core.prune_degree_one().unwrap();
                prop_assert_eq!(again.removed(), 0);
                prop_assert_eq!(again.topology.to_edge_list(), core.to_edge_list());
                // Survivor labels are preserved through the id remap.
                for old in 0..t.num_nodes() {
                    if let Some(new) = pruned.node_map[old] {
                        prop_assert_eq!(core.label(new), t.label(old));
                    }
                }
            }
        }
    }

    #[test]
    fn ksp_returns_sorted_simple_distinct_paths(
        n in 3usize..9, extra in 0usize..8, seed in any::<u64>(), k in 1usize..5
    ) {
        let t = topo(n, extra, seed);
        let s = 0;
        let d = t.num_nodes() - 1;
        let paths = ksp(&t, s, d, k);
        prop_assert!(!paths.is_empty());
        prop_assert!(paths.len() <= k);
        for p in &paths {
            prop_assert_eq!(*p.nodes().first().unwrap(), s);
            prop_assert_eq!(*p.nodes().last().unwrap(), d);
            let distinct: HashSet<_> = p.nodes().iter().collect();
            prop_assert_eq!(distinct.len(), p.nodes().len(), "loop in {:?}", p.nodes());
        }
        for w in paths.windows(2) {
            prop_assert!(w[0] < w[1], "not strictly ordered: {:?} vs {:?}", w[0], w[1]);
        }
        let dist = bfs_hops(&t, s)[d].unwrap();
        prop_assert_eq!(paths[0].hops(), dist);
    }

    #[test]
    fn edksp_paths_share_no_edges(
        n in 3usize..9, extra in 0usize..8, seed in any::<u64>(), k in 1usize..5
    ) {
        let t = topo(n, extra, seed);
        let s = 0;
        let d = t.num_nodes() - 1;
        let paths = edksp(&t, s, d, k);
        prop_assert!(!paths.is_empty());
        let mut seen: HashSet<usize> = HashSet::new();
        for p in &paths {
            for &e in p.edges() {
                prop_assert!(seen.insert(e), "edge {} reused across paths", e);
            }
        }
        let dist = bfs_hops(&t, s)[d].unwrap();
        prop_assert_eq!(paths[0].hops(), dist);
        // Disjointness makes every per-edge count exactly one, so the risk
        // of the list is exactly 1/m, down to the bit pattern.
        let risk = edge_risk(&paths).unwrap();
        prop_assert_eq!(risk.to_bits(), (1.0 / paths.len() as f64).to_bits());
    }

    #[test]
    fn backup_lists_detour_around_their_own_link(
        n in 3usize..9, extra in 1usize..8, seed in any::<u64>(), k in 1usize..4
    ) {
        let t = topo(n, extra, seed);
        let ps = build_path_set(&t, k).unwrap();
        for e in 0..t.num_edges() {
            let edge = &t.edges()[e];
            let list = ps.backup(e);
            if t.is_bridge(e) {
                prop_assert!(list.is_empty(), "bridge {} got a detour", e);
                continue;
            }
            prop_assert!(!list.is_empty(), "non-bridge {} left unprotected", e);
            for p in list {
                prop_assert_eq!(*p.nodes().first().unwrap(), edge.u);
                prop_assert_eq!(*p.nodes().last().unwrap(), edge.v);
                prop_assert!(!p.contains_edge(e), "detour for {} crosses it", e);
            }
        }
    }

    #[test]
    fn path_set_json_round_trip_is_exact(
        n in 3usize..8, extra in 0usize..6, seed in any::<u64>(), k in 1usize..4
    ) {
        let t = topo(n, extra, seed);
        let ps = build_path_set(&t, k).unwrap();
        let json = ps.to_json(&t);
        let back = PathSet::from_json(&json, &t).unwrap();
        prop_assert_eq!(&back, &ps);
        prop_assert_eq!(back.to_json(&t), json);
    }

    #[test]
    fn gravity_demand_is_symmetric_and_conserves_volume(
        n in 2usize..12, volume in 0.1f64..1e4, seed in any::<u64>()
    ) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let dm = gravity(n, volume, &mut rng).unwrap();
        for i in 0..n {
            prop_assert_eq!(dm.get(i, i), 0.0);
            for j in 0..n {
                prop_assert!(dm.get(i, j) >= 0.0);
                prop_assert!(dm.get(i, j).is_finite());
                prop_assert_eq!(dm.get(i, j).to_bits(), dm.get(j, i).to_bits());
                if i != j {
                    prop_assert!(dm.get(i, j) > 0.0);
                }
            }
        }
        prop_assert!((dm.total() - volume).abs() <= 1e-9 * volume);
    }

    #[test]
    fn perturbation_stays_inside_the_noise_band(
        n in 2usize..8, alpha in 0.0f64..=1.0, volume in 0.1f64..100.0,
        seed in any::<u64>()
    ) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let dm = gravity(n, volume, &mut rng).unwrap();
        let noisy = perturb(&dm, alpha, &mut rng).unwrap();
        for i in 0..n {
            for j in 0..n {
                let base = dm.get(i, j);
                let got = noisy.get(i, j);
                prop_assert!(got >= base * (1.0 - alpha) * (1.0 - 1e-12));
                prop_assert!(got <= base * (1.0 + alpha) * (1.0 + 1e-12));
            }
        }
        let same = perturb(&dm, 0.0, &mut rng).unwrap();
        for i in 0..n {
            for j in 0..n {
                prop_assert_eq!(same.get(i, j).to_bits(), dm.get(i, j).to_bits());
            }
        }
    }

    #[test]
    fn series_split_partitions_in_order(
        n in 2usize..6, epochs in 4usize..30, frac in 0.0f64..=1.0,
        seed in any::<u64>()
    ) {
        let series = gravity_series(n, epochs, 10.0, seed).unwrap();
        let (train, test) = series.split(frac).unwrap();
        prop_assert_eq!(train.len(), (frac * epochs as f64).floor() as usize);
        prop_assert_eq!(train.len() + test.len(), epochs);
        for (i, m) in train.iter().chain(test.iter()).enumerate() {
            prop_assert_eq!(m, &series.matrices()[i]);
        }
    }

    #[test]
    fn link_loads_scale_linearly_with_demand(
        n in 3usize..8, extra in 0usize..6, seed in any::<u64>(),
        factor in 0.01f64..100.0
    ) {
        let t = topo(n, extra, seed);
        let ps = build_path_set(&t, 3).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x5eed);
        let dm = gravity(n, 50.0, &mut rng).unwrap();
        let rc = RatioConfig::uniform(&ps);
        let view = PathSetView::full(&ps);
        let base = compute_loads(&t, &view, &dm, &rc).unwrap();
        let scaled = compute_loads(&t, &view, &dm.scaled(factor), &rc).unwrap();
        for (b, s) in base.iter().zip(&scaled) {
            let want = b * factor;
            prop_assert!((s - want).abs() <= 1e-12 * want.abs().max(1.0));
        }
    }

    #[test]
    fn percentile_loss_is_monotone_in_beta(
        losses in proptest::collection::vec(
            proptest::collection::vec(0.0f64..1.0, 3), 1..8),
        b1 in 0.0f64..0.95, b2 in 0.0f64..0.95
    ) {
        let (lo, hi) = if b1 <= b2 { (b1, b2) } else { (b2, b1) };
        let weight = 1.0 / losses.len() as f64;
        let records: Vec<LossRecord> = losses
            .iter()
            .map(|l| LossRecord {
                mlu: 1.0,
                weight,
                flows: vec![((0, 1), l[0]), ((0, 2), l[1]), ((2, 1), l[2])],
            })
            .collect();
        prop_assert!(perc_loss(&records, lo) <= perc_loss(&records, hi));
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn recovery_conserves_demand_and_clears_failed_links(
        n in 4usize..9, extra in 1usize..8, seed in any::<u64>(),
        edges_per_scenario in 1usize..3
    ) {
        let t = topo(n, extra, seed);
        let ps = build_path_set(&t, 3).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0xfa11);
        let dm = gravity(n, 40.0, &mut rng).unwrap();
        let rc = RatioConfig::uniform(&ps);
        let sample = sample_scenarios(&t, 3, edges_per_scenario, seed);
        prop_assume!(sample.is_ok());
        let mut dropped_by_strategy = Vec::new();
        for strategy in [Strategy::Weave, Strategy::SourceReroute, Strategy::NoReaction] {
            let mut worst_drop = 0.0_f64;
            for sc in &sample.as_ref().unwrap().scenarios {
                let out = recover(&t, &ps, &sc.failed_edges, &dm, &rc, strategy).unwrap();
                let buckets = out.delivered_planned + out.weaved + out.rerouted + out.dropped;
                prop_assert!(
                    (buckets - out.total_demand).abs() <= 1e-9 * out.total_demand.max(1.0)
                );
                for &e in &sc.failed_edges {
                    prop_assert_eq!(out.loads[e], 0.0, "load on failed edge {}", e);
                }
                worst_drop = worst_drop.max(out.dropped);
            }
            dropped_by_strategy.push(worst_drop);
        }
        // Weaving never drops more than source rerouting, which never drops
        // more than taking no action at all.
        prop_assert!(dropped_by_strategy[0] <= dropped_by_strategy[1] + 1e-12);
        prop_assert!(dropped_by_strategy[1] <= dropped_by_strategy[2] + 1e-12);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(8))]

    #[test]
    fn lp_optimum_never_loses_to_uniform_ratios(
        n in 3usize..6, extra in 0usize..4, seed in any::<u64>()
    ) {
        let t = topo(n, extra, seed);
        let ps = build_path_set(&t, 3).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x17);
        let dm = gravity(n, 25.0, &mut rng).unwrap();
        let view = PathSetView::full(&ps);
        let lp = lp_oracle(&t, &view, &dm).unwrap();
        let uniform = RatioConfig::uniform(&ps);
        let loads = compute_loads(&t, &view, &dm, &uniform).unwrap();
        let uniform_mlu = loads
            .iter()
            .zip(t.edges())
            .map(|(l, e)| l / e.capacity)
            .fold(0.0_f64, f64::max);
        prop_assert!(lp.mlu <= uniform_mlu + 1e-9 * uniform_mlu.max(1.0));
        prop_assert!(lp.lower_bound <= lp.mlu + 1e-9 * lp.mlu.max(1.0));

        // Scaling all demand scales the optimum by the same factor.
        let lp2 = lp_oracle(&t, &view, &dm.scaled(2.5)).unwrap();
        prop_assert!((lp2.mlu - 2.5 * lp.mlu).abs() <= 1e-6 * (2.5 * lp.mlu).max(1.0));

        // The reported split actually achieves the reported objective.
        let achieved = compute_loads(&t, &view, &dm, &lp.ratios).unwrap();
        let achieved_mlu = achieved
            .iter()
            .zip(t.edges())
            .map(|(l, e)| l / e.capacity)
            .fold(0.0_f64, f64::max);
        prop_assert!((achieved_mlu - lp.mlu).abs() <= 1e-9 * lp.mlu.max(1.0));
    }
}

/// The per-pair index decomposition is a bijection on every board size the
/// suite uses.
#[test]
fn pair_indexing_round_trips() {
    for n in 2..40 {
        for idx in 0..n * (n - 1) {
            let (s, d) = pair_from_index(n, idx);
            assert_ne!(s, d);
            assert!(s < n && d < n);
            assert_eq!(pathweave::pathing::pair_index(n, s, d), idx);
        }
    }
}
