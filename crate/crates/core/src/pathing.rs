//! Path computation and risk analytics: loopless k-shortest paths (Yen),
//! edge-disjoint k-shortest paths, per-link backup detour sets, and the
//! edge-risk statistics over all of them.
//!
//! All path orderings use hop count with ties broken by the lexicographically
//! smallest node-id sequence, so identical inputs always produce identical
//! path sets.

use std::cmp::Ordering;
use std::collections::BTreeSet;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::topology::{EdgeId, NodeId, Topology};

/// A simple (loopless) path: node sequence plus the derived edge-id sequence.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct Path {
    nodes: Vec<NodeId>,
    edges: Vec<EdgeId>,
}

impl Path {
    /// Validates that `nodes` is a simple path in `t` and derives edge ids.
    pub fn new(t: &Topology, nodes: Vec<NodeId>) -> Result<Self> {
        if nodes.len() < 2 {
            return Err(Error::Topology("path needs at least two nodes".into()));
        }
        let mut seen = vec![false; t.num_nodes()];
        let mut edges = Vec::with_capacity(nodes.len() - 1);
        for w in nodes.windows(2) {
            let e = t.edge_between(w[0], w[1]).ok_or_else(|| {
                Error::Topology(format!("nodes {} and {} are not adjacent", w[0], w[1]))
            })?;
            edges.push(e);
        }
        for &n in &nodes {
            if n >= t.num_nodes() {
                return Err(Error::Topology(format!("node {n} out of range")));
            }
            if seen[n] {
                return Err(Error::Topology(format!("node {n} repeats in path")));
            }
            seen[n] = true;
        }
        Ok(Path { nodes, edges })
    }

    fn from_nodes_unchecked(t: &Topology, nodes: Vec<NodeId>) -> Self {
        let edges = nodes
            .windows(2)
            .map(|w| t.edge_between(w[0], w[1]).expect("adjacent"))
            .collect();
        Path { nodes, edges }
    }

    pub fn nodes(&self) -> &[NodeId] {
        &self.nodes
    }

    pub fn edges(&self) -> &[EdgeId] {
        &self.edges
    }

    pub fn hops(&self) -> usize {
        self.edges.len()
    }

    pub fn src(&self) -> NodeId {
        self.nodes[0]
    }

    pub fn dst(&self) -> NodeId {
        *self.nodes.last().unwrap()
    }

    pub fn contains_edge(&self, e: EdgeId) -> bool {
        self.edges.contains(&e)
    }

    pub fn crosses_any(&self, failed: &[bool]) -> bool {
        self.edges.iter().any(|&e| failed[e])
    }

    /// Same path walked from `dst` to `src`.
    pub fn reversed(&self) -> Path {
        Path {
            nodes: self.nodes.iter().rev().copied().collect(),
            edges: self.edges.iter().rev().copied().collect(),
        }
    }
}

impl PartialOrd for Path {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

/// Hop count first, then lexicographic node sequence.
impl Ord for Path {
    fn cmp(&self, other: &Self) -> Ordering {
        self.hops()
            .cmp(&other.hops())
            .then_with(|| self.nodes.cmp(&other.nodes))
    }
}

/// Lexicographically smallest hop-shortest path from `s` to `d`, avoiding
/// banned edges and nodes. BFS from `d` yields distances; a greedy forward
/// walk then always steps to the smallest-id neighbor that still lies on some
/// shortest path.
fn lex_shortest(
    t: &Topology,
    s: NodeId,
    d: NodeId,
    banned_edges: &[bool],
    banned_nodes: &[bool],
) -> Option<Path> {
    debug_assert_ne!(s, d);
    if banned_nodes[s] || banned_nodes[d] {
        return None;
    }
    let n = t.num_nodes();
    let mut dist = vec![usize::MAX; n];
    dist[d] = 0;
    let mut frontier = vec![d];
    while !frontier.is_empty() {
        let mut next = Vec::new();
        for &x in &frontier {
            for &(y, e) in t.neighbors(x) {
                if banned_edges[e] || banned_nodes[y] || dist[y] != usize::MAX {
                    continue;
                }
                dist[y] = dist[x] + 1;
                next.push(y);
            }
        }
        frontier = next;
    }
    if dist[s] == usize::MAX {
        return None;
    }
    let mut nodes = Vec::with_capacity(dist[s] + 1);
    let mut cur = s;
    nodes.push(cur);
    while cur != d {
        // Adjacency is sorted by neighbor id, so the first admissible
        // neighbor is the lexicographic choice.
        let step = t
            .neighbors(cur)
            .iter()
            .find(|&&(y, e)| {
                !banned_edges[e] && !banned_nodes[y] && dist[y] + 1 == dist[cur]
            })
            .expect("distance field guarantees a descent step");
        cur = step.0;
        nodes.push(cur);
    }
    Some(Path::from_nodes_unchecked(t, nodes))
}

/// Up to `k` loopless shortest paths by hop count (Yen's algorithm) with
/// deterministic (hops, node-sequence) ordering. `base_banned` edges are
/// excluded from every path.
fn ksp_banned(t: &Topology, s: NodeId, d: NodeId, k: usize, base_banned: &[bool]) -> Vec<Path> {
    assert!(k >= 1, "k must be positive");
    assert_ne!(s, d, "source equals destination");
    let no_nodes = vec![false; t.num_nodes()];
    let Some(first) = lex_shortest(t, s, d, base_banned, &no_nodes) else {
        return Vec::new();
    };
    let mut accepted = vec![first];
    let mut candidates: BTreeSet<Path> = BTreeSet::new();
    while accepted.len() < k {
        let prev = accepted.last().unwrap().clone();
        for j in 0..prev.hops() {
            let spur = prev.nodes()[j];
            let root = &prev.nodes()[..=j];
            let mut banned_edges = base_banned.to_vec();
            for p in &accepted {
                if p.nodes().len() > j && p.nodes()[..=j] == *root {
                    banned_edges[p.edges()[j]] = true;
                }
            }
            let mut banned_nodes = vec![false; t.num_nodes()];
            for &x in &root[..j] {
                banned_nodes[x] = true;
            }
            if let Some(tail) = lex_shortest(t, spur, d, &banned_edges, &banned_nodes) {
                let mut nodes = root[..j].to_vec();
                nodes.extend_from_slice(tail.nodes());
                let candidate = Path::from_nodes_unchecked(t, nodes);
                if !accepted.contains(&candidate) {
                    candidates.insert(candidate);
                }
            }
        }
        match candidates.pop_first() {
            Some(best) => accepted.push(best),
            None => break,
        }
    }
    accepted
}

/// Up to `k` loopless shortest paths between `s` and `d`.
pub fn ksp(t: &Topology, s: NodeId, d: NodeId, k: usize) -> Vec<Path> {
    ksp_banned(t, s, d, k, &vec![false; t.num_edges()])
}

/// Edge-disjoint paths: repeatedly take the shortest path and delete its
/// edges, until `s` and `d` disconnect or `k` paths are found.
pub fn edksp(t: &Topology, s: NodeId, d: NodeId, k: usize) -> Vec<Path> {
    assert!(k >= 1, "k must be positive");
    assert_ne!(s, d, "source equals destination");
    let no_nodes = vec![false; t.num_nodes()];
    let mut banned = vec![false; t.num_edges()];
    let mut out = Vec::new();
    while out.len() < k {
        let Some(p) = lex_shortest(t, s, d, &banned, &no_nodes) else {
            break;
        };
        for &e in p.edges() {
            banned[e] = true;
        }
        out.push(p);
    }
    out
}

/// Routing strategy for [`build_path_set_custom`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RoutingAlgo {
    Edksp,
    Ksp,
}

/// Routing paths per ordered pair plus detour (backup) paths per link.
///
/// Routing lists are indexed by [`pair_index`]; backup lists by edge id, each
/// stored in the edge's canonical `u -> v` orientation.
#[derive(Debug, Clone, PartialEq)]
pub struct PathSet {
    num_nodes: usize,
    k: usize,
    routing: Vec<Vec<Path>>,
    backup: Vec<Vec<Path>>,
}

/// Dense index of the ordered pair `(s, d)` among all `n*(n-1)` pairs.
pub fn pair_index(n: usize, s: NodeId, d: NodeId) -> usize {
    debug_assert!(s != d && s < n && d < n);
    s * (n - 1) + if d > s { d - 1 } else { d }
}

/// Inverse of [`pair_index`].
pub fn pair_from_index(n: usize, idx: usize) -> (NodeId, NodeId) {
    let s = idx / (n - 1);
    let r = idx % (n - 1);
    let d = if r >= s { r + 1 } else { r };
    (s, d)
}

impl PathSet {
    pub fn num_nodes(&self) -> usize {
        self.num_nodes
    }

    pub fn k(&self) -> usize {
        self.k
    }

    pub fn num_pairs(&self) -> usize {
        self.routing.len()
    }

    pub fn routing(&self, s: NodeId, d: NodeId) -> &[Path] {
        &self.routing[pair_index(self.num_nodes, s, d)]
    }

    pub fn routing_at(&self, pair: usize) -> &[Path] {
        &self.routing[pair]
    }

    /// Backup detours for edge `e`, oriented `u -> v`; empty for bridges.
    pub fn backup(&self, e: EdgeId) -> &[Path] {
        &self.backup[e]
    }

    pub fn num_edges(&self) -> usize {
        self.backup.len()
    }

    pub fn total_routing_paths(&self) -> usize {
        self.routing.iter().map(Vec::len).sum()
    }

    /// Backup entries counted once per link direction, the convention of the
    /// path-census reports (a detour serves both orientations reversed).
    pub fn total_backup_paths_directed(&self) -> usize {
        2 * self.backup.iter().map(Vec::len).sum::<usize>()
    }

    /// Per-pair start offsets into the flat routing-path enumeration, with a
    /// final total; used to align flat weight vectors.
    pub fn flat_offsets(&self) -> Vec<usize> {
        let mut offsets = Vec::with_capacity(self.routing.len() + 1);
        let mut acc = 0;
        for list in &self.routing {
            offsets.push(acc);
            acc += list.len();
        }
        offsets.push(acc);
        offsets
    }

    pub fn to_json(&self, t: &Topology) -> String {
        let file = PathSetFile {
            k: self.k,
            routing: (0..self.routing.len())
                .map(|idx| {
                    let (src, dst) = pair_from_index(self.num_nodes, idx);
                    RoutingEntry {
                        src,
                        dst,
                        paths: self.routing[idx]
                            .iter()
                            .map(|p| p.nodes().to_vec())
                            .collect(),
                    }
                })
                .collect(),
            backup: self
                .backup
                .iter()
                .enumerate()
                .map(|(id, list)| {
                    let e = t.edge(id);
                    BackupEntry {
                        edge: [e.u, e.v],
                        paths: list.iter().map(|p| p.nodes().to_vec()).collect(),
                    }
                })
                .collect(),
        };
        serde_json::to_string_pretty(&file).expect("pathset serializes")
    }

    pub fn from_json(text: &str, t: &Topology) -> Result<Self> {
        let file: PathSetFile = serde_json::from_str(text)?;
        let n = t.num_nodes();
        let mut routing = vec![Vec::new(); n * (n - 1)];
        for entry in file.routing {
            if entry.src >= n || entry.dst >= n || entry.src == entry.dst {
                return Err(Error::Dimension(format!(
                    "routing entry for invalid pair ({}, {})",
                    entry.src, entry.dst
                )));
            }
            let idx = pair_index(n, entry.src, entry.dst);
            let mut list = Vec::with_capacity(entry.paths.len());
            for nodes in entry.paths {
                let p = Path::new(t, nodes)?;
                if p.src() != entry.src || p.dst() != entry.dst {
                    return Err(Error::Dimension(
                        "routing path endpoints disagree with its pair".into(),
                    ));
                }
                list.push(p);
            }
            routing[idx] = list;
        }
        let mut backup = vec![Vec::new(); t.num_edges()];
        for entry in file.backup {
            let e = t.edge_between(entry.edge[0], entry.edge[1]).ok_or_else(|| {
                Error::Dimension(format!(
                    "backup entry for non-edge ({}, {})",
                    entry.edge[0], entry.edge[1]
                ))
            })?;
            let (u, v) = (t.edge(e).u, t.edge(e).v);
            let mut list = Vec::with_capacity(entry.paths.len());
            for nodes in entry.paths {
                let p = Path::new(t, nodes)?;
                if p.src() != u || p.dst() != v {
                    return Err(Error::Dimension(
                        "backup path endpoints disagree with its edge".into(),
                    ));
                }
                if p.contains_edge(e) {
                    return Err(Error::Dimension(
                        "backup path traverses its own protected edge".into(),
                    ));
                }
                list.push(p);
            }
            backup[e] = list;
        }
        Ok(PathSet {
            num_nodes: n,
            k: file.k,
            routing,
            backup,
        })
    }
}

#[derive(Serialize, Deserialize)]
struct PathSetFile {
    k: usize,
    routing: Vec<RoutingEntry>,
    backup: Vec<BackupEntry>,
}

#[derive(Serialize, Deserialize)]
struct RoutingEntry {
    src: usize,
    dst: usize,
    paths: Vec<Vec<usize>>,
}

#[derive(Serialize, Deserialize)]
struct BackupEntry {
    edge: [usize; 2],
    paths: Vec<Vec<usize>>,
}

/// Builds the standard path set: edge-disjoint routing paths for every
/// ordered pair and, per link, the k shortest detours between its endpoints
/// (the protected link itself excluded). Bridges get an empty backup list,
/// which downstream feeds the reroute fallback.
pub fn build_path_set(t: &Topology, k: usize) -> Result<PathSet> {
    build_path_set_custom(t, RoutingAlgo::Edksp, k, k)
}

/// [`build_path_set`] with independent routing/backup budgets and a choice of
/// routing strategy.
pub fn build_path_set_custom(
    t: &Topology,
    algo: RoutingAlgo,
    routing_k: usize,
    backup_k: usize,
) -> Result<PathSet> {
    if routing_k < 1 || backup_k < 1 {
        return Err(Error::Dimension("path budgets must be at least 1".into()));
    }
    if !t.is_connected() {
        return Err(Error::Topology(
            "path set construction requires a connected topology".into(),
        ));
    }
    let n = t.num_nodes();
    let routing: Vec<Vec<Path>> = (0..n * (n - 1))
        .into_par_iter()
        .map(|idx| {
            let (s, d) = pair_from_index(n, idx);
            let list = match algo {
                RoutingAlgo::Edksp => edksp(t, s, d, routing_k),
                RoutingAlgo::Ksp => ksp(t, s, d, routing_k),
            };
            debug_assert!(list.windows(2).all(|w| w[0] <= w[1]), "sorted routing list");
            list
        })
        .collect();
    let backup: Vec<Vec<Path>> = t
        .edges()
        .par_iter()
        .map(|e| {
            let mut banned = vec![false; t.num_edges()];
            banned[e.id] = true;
            ksp_banned(t, e.u, e.v, backup_k, &banned)
        })
        .collect();
    Ok(PathSet {
        num_nodes: n,
        k: routing_k,
        routing,
        backup,
    })
}

/// Maximum edge risk ratio of a path list: the largest fraction of the paths
/// any single edge carries (1/|list| exactly for edge-disjoint lists).
pub fn edge_risk(paths: &[Path]) -> Result<f64> {
    if paths.is_empty() {
        return Err(Error::Dimension("edge_risk of an empty path list".into()));
    }
    let mut counts: std::collections::HashMap<EdgeId, usize> = std::collections::HashMap::new();
    for p in paths {
        for &e in p.edges() {
            *counts.entry(e).or_insert(0) += 1;
        }
    }
    let max = counts.values().copied().max().unwrap_or(0);
    Ok(max as f64 / paths.len() as f64)
}

/// Which path population a risk profile describes.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RiskKind {
    /// Routing lists of pairs joined by a direct link.
    Adjacent,
    /// Routing lists of all other pairs.
    NonAdjacent,
    /// Per-link backup lists (links without detours are skipped).
    Backup,
}

/// Distribution summary of per-list [`edge_risk`] values.
#[derive(Debug, Clone, Serialize)]
pub struct RiskSummary {
    pub kind: String,
    pub count: usize,
    /// Lists skipped because they are empty (bridges, for the backup kind).
    pub skipped: usize,
    pub mean: f64,
    pub min: f64,
    pub max: f64,
    pub p50: f64,
    pub p90: f64,
    pub p99: f64,
    /// Ten equal-width bins over (0, 1]; risk r lands in bin ceil(10r)-1.
    pub histogram: [usize; 10],
}

fn quantile(sorted: &[f64], q: f64) -> f64 {
    if sorted.is_empty() {
        return 0.0;
    }
    let rank = (q * sorted.len() as f64).ceil() as usize;
    sorted[rank.clamp(1, sorted.len()) - 1]
}

/// Aggregates edge risk over the selected path population.
pub fn risk_profile(ps: &PathSet, t: &Topology, kind: RiskKind) -> RiskSummary {
    let mut values = Vec::new();
    let mut skipped = 0;
    let mut push = |list: &[Path]| {
        if list.is_empty() {
            skipped += 1;
        } else {
            values.push(edge_risk(list).expect("nonempty"));
        }
    };
    match kind {
        RiskKind::Adjacent | RiskKind::NonAdjacent => {
            for idx in 0..ps.num_pairs() {
                let (s, d) = pair_from_index(ps.num_nodes(), idx);
                let adjacent = t.edge_between(s, d).is_some();
                if adjacent == (kind == RiskKind::Adjacent) {
                    push(ps.routing_at(idx));
                }
            }
        }
        RiskKind::Backup => {
            for e in 0..ps.num_edges() {
                push(ps.backup(e));
            }
        }
    }
    let mut sorted = values.clone();
    sorted.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let mut histogram = [0usize; 10];
    for &r in &sorted {
        let bin = ((r * 10.0).ceil() as usize).clamp(1, 10) - 1;
        histogram[bin] += 1;
    }
    let count = sorted.len();
    RiskSummary {
        kind: format!("{kind:?}").to_lowercase(),
        count,
        skipped,
        mean: if count == 0 {
            0.0
        } else {
            sorted.iter().sum::<f64>() / count as f64
        },
        min: sorted.first().copied().unwrap_or(0.0),
        max: sorted.last().copied().unwrap_or(0.0),
        p50: quantile(&sorted, 0.5),
        p90: quantile(&sorted, 0.9),
        p99: quantile(&sorted, 0.99),
        histogram,
    }
}

/// Load deltas predicted on an observer edge `e0` when `failed` dies.
#[derive(Debug, Clone, PartialEq)]
pub struct DeltaF {
    /// Source rerouting: sum over pairs of failed traffic times the fraction
    /// of the pair's surviving routing paths that traverse `e0`.
    pub base: f64,
    /// Local weaving: total failed traffic times the fraction of the failed
    /// link's backup detours that traverse `e0`.
    pub woven: f64,
    /// Pairs whose routing lists have no surviving path (contribute 0).
    pub pairs_without_survivors: Vec<(NodeId, NodeId)>,
}

/// Evaluates both rerouting-impact models for the given failed link, the
/// per-pair traffic volumes stranded on it, and an observer edge `e0`.
pub fn delta_f_models(
    ps: &PathSet,
    failed: EdgeId,
    per_pair_failed_traffic: &[((NodeId, NodeId), f64)],
    e0: EdgeId,
) -> DeltaF {
    assert_ne!(failed, e0, "observer edge must differ from the failed edge");
    let mut base = 0.0;
    let mut total = 0.0;
    let mut dead_pairs = Vec::new();
    for &((s, d), volume) in per_pair_failed_traffic {
        assert!(volume >= 0.0, "traffic volumes are nonnegative");
        total += volume;
        let survivors: Vec<&Path> = ps
            .routing(s, d)
            .iter()
            .filter(|p| !p.contains_edge(failed))
            .collect();
        if survivors.is_empty() {
            dead_pairs.push((s, d));
            continue;
        }
        let hits = survivors.iter().filter(|p| p.contains_edge(e0)).count();
        base += volume * hits as f64 / survivors.len() as f64;
    }
    let backups = ps.backup(failed);
    let woven = if backups.is_empty() {
        0.0
    } else {
        let hits = backups.iter().filter(|p| p.contains_edge(e0)).count();
        total * hits as f64 / backups.len() as f64
    };
    DeltaF {
        base,
        woven,
        pairs_without_survivors: dead_pairs,
    }
}

/// Fraction of links protected by at least `k` backup detours.
pub fn backup_coverage(ps: &PathSet, k: usize) -> f64 {
    if ps.num_edges() == 0 {
        return 0.0;
    }
    let covered = ps.backup.iter().filter(|list| list.len() >= k).count();
    covered as f64 / ps.num_edges() as f64
}
