//! Capacitated undirected graph model, file ingestion, and degree-one pruning.
//!
//! Edges are stored once per unordered node pair with a symmetric capacity;
//! load accounting elsewhere sums both directions onto the single edge record.
//! Node and edge ids are dense and stable for the lifetime of a `Topology`,
//! which is immutable after construction and safe to share across threads.

use std::collections::HashMap;
use std::fmt::Write as _;
use std::io::Read;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};

pub type NodeId = usize;
pub type EdgeId = usize;

/// One undirected link with a positive capacity in traffic units per epoch.
#[derive(Debug, Clone, PartialEq)]
pub struct Edge {
    pub id: EdgeId,
    pub u: NodeId,
    pub v: NodeId,
    pub capacity: f64,
}

impl Edge {
    /// The endpoint opposite `n`. Panics if `n` is not an endpoint.
    pub fn other(&self, n: NodeId) -> NodeId {
        if n == self.u {
            self.v
        } else {
            assert_eq!(n, self.v, "node {n} is not an endpoint of edge {}", self.id);
            self.u
        }
    }
}

/// Input formats accepted by [`load_topology`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TopologyFormat {
    /// Whitespace-separated `src dst [capacity]` lines, `#` comments.
    EdgeList,
    /// Minimal GraphML subset: `node`/`edge` elements with id attributes and
    /// an optional capacity data key; everything else is ignored.
    GraphmlLite,
}

/// Immutable capacitated graph with dense node/edge ids.
#[derive(Debug, Clone, PartialEq)]
pub struct Topology {
    labels: Vec<String>,
    edges: Vec<Edge>,
    /// Per node: `(neighbor, edge id)` sorted by neighbor id.
    adj: Vec<Vec<(NodeId, EdgeId)>>,
    by_pair: HashMap<(NodeId, NodeId), EdgeId>,
}

impl Topology {
    /// Builds a topology from labels and `(u, v, capacity)` triples.
    ///
    /// Rejects self-loops, duplicate unordered pairs, non-positive or
    /// non-finite capacities, out-of-range endpoints, and isolated nodes
    /// (an isolated node cannot round-trip through the edge-list format).
    pub fn from_edges(labels: Vec<String>, raw: &[(NodeId, NodeId, f64)]) -> Result<Self> {
        let n = labels.len();
        if n == 0 {
            return Err(Error::Topology("no nodes".into()));
        }
        let mut edges = Vec::with_capacity(raw.len());
        let mut by_pair = HashMap::with_capacity(raw.len());
        let mut adj = vec![Vec::new(); n];
        for &(u, v, capacity) in raw {
            if u >= n || v >= n {
                return Err(Error::Topology(format!(
                    "edge ({u},{v}) references a node outside 0..{n}"
                )));
            }
            if u == v {
                return Err(Error::Topology(format!(
                    "self-loop on node {u} ({})",
                    labels[u]
                )));
            }
            if !(capacity.is_finite() && capacity > 0.0) {
                return Err(Error::Topology(format!(
                    "edge ({},{}) has non-positive capacity {capacity}",
                    labels[u], labels[v]
                )));
            }
            let key = (u.min(v), u.max(v));
            let id = edges.len();
            if by_pair.insert(key, id).is_some() {
                return Err(Error::Topology(format!(
                    "duplicate edge between {} and {}",
                    labels[u], labels[v]
                )));
            }
            adj[u].push((v, id));
            adj[v].push((u, id));
            edges.push(Edge { id, u, v, capacity });
        }
        if let Some(isolated) = adj.iter().position(|a| a.is_empty()) {
            return Err(Error::Topology(format!(
                "isolated node {} ({})",
                isolated, labels[isolated]
            )));
        }
        for a in &mut adj {
            a.sort_unstable();
        }
        Ok(Topology {
            labels,
            edges,
            adj,
            by_pair,
        })
    }

    pub fn num_nodes(&self) -> usize {
        self.labels.len()
    }

    pub fn num_edges(&self) -> usize {
        self.edges.len()
    }

    /// Link count with each undirected edge counted once per direction, the
    /// convention used by the topology reports.
    pub fn num_directed_links(&self) -> usize {
        2 * self.edges.len()
    }

    pub fn label(&self, n: NodeId) -> &str {
        &self.labels[n]
    }

    pub fn node_by_label(&self, label: &str) -> Option<NodeId> {
        self.labels.iter().position(|l| l == label)
    }

    pub fn edges(&self) -> &[Edge] {
        &self.edges
    }

    pub fn edge(&self, id: EdgeId) -> &Edge {
        &self.edges[id]
    }

    /// `(neighbor, edge id)` pairs sorted by neighbor id.
    pub fn neighbors(&self, n: NodeId) -> &[(NodeId, EdgeId)] {
        &self.adj[n]
    }

    pub fn degree(&self, n: NodeId) -> usize {
        self.adj[n].len()
    }

    pub fn edge_between(&self, u: NodeId, v: NodeId) -> Option<EdgeId> {
        self.by_pair.get(&(u.min(v), u.max(v))).copied()
    }

    /// Human-readable `u-v` endpoint labels for an edge.
    pub fn edge_label(&self, id: EdgeId) -> String {
        let e = &self.edges[id];
        format!("{}-{}", self.labels[e.u], self.labels[e.v])
    }

    pub fn is_connected(&self) -> bool {
        self.connected_without(&[])
    }

    /// Connectivity of the residual graph after removing `banned` edge ids.
    pub fn connected_without(&self, banned: &[EdgeId]) -> bool {
        let n = self.num_nodes();
        if n == 0 {
            return false;
        }
        let mut dead = vec![false; self.edges.len()];
        for &e in banned {
            dead[e] = true;
        }
        let mut seen = vec![false; n];
        let mut stack = vec![0];
        seen[0] = true;
        let mut count = 1;
        while let Some(x) = stack.pop() {
            for &(y, e) in &self.adj[x] {
                if !dead[e] && !seen[y] {
                    seen[y] = true;
                    count += 1;
                    stack.push(y);
                }
            }
        }
        count == n
    }

    /// True if removing the edge disconnects its endpoints.
    pub fn is_bridge(&self, e: EdgeId) -> bool {
        !self.connected_without(&[e])
    }

    /// `(degree, node count)` pairs in ascending degree order.
    pub fn degree_histogram(&self) -> Vec<(usize, usize)> {
        let mut counts: HashMap<usize, usize> = HashMap::new();
        for n in 0..self.num_nodes() {
            *counts.entry(self.degree(n)).or_insert(0) += 1;
        }
        let mut hist: Vec<_> = counts.into_iter().collect();
        hist.sort_unstable();
        hist
    }

    /// Recursively removes all nodes of degree <= 1 and re-densifies ids.
    ///
    /// Errors with [`Error::Degenerate`] when nothing survives (e.g. a path
    /// graph collapses entirely). Pruning a connected graph leaves it
    /// connected: only leaves are ever removed.
    pub fn prune_degree_one(&self) -> Result<Pruned> {
        let n = self.num_nodes();
        let mut alive = vec![true; n];
        let mut degree: Vec<usize> = (0..n).map(|x| self.degree(x)).collect();
        let mut queue: Vec<NodeId> = (0..n).filter(|&x| degree[x] <= 1).collect();
        while let Some(x) = queue.pop() {
            if !alive[x] {
                continue;
            }
            alive[x] = false;
            for &(y, _) in &self.adj[x] {
                if alive[y] {
                    degree[y] -= 1;
                    if degree[y] <= 1 {
                        queue.push(y);
                    }
                }
            }
        }
        if alive.iter().all(|a| !a) {
            return Err(Error::Degenerate);
        }
        let mut node_map = vec![None; n];
        let mut labels = Vec::new();
        for x in 0..n {
            if alive[x] {
                node_map[x] = Some(labels.len());
                labels.push(self.labels[x].clone());
            }
        }
        let raw: Vec<(NodeId, NodeId, f64)> = self
            .edges
            .iter()
            .filter(|e| alive[e.u] && alive[e.v])
            .map(|e| (node_map[e.u].unwrap(), node_map[e.v].unwrap(), e.capacity))
            .collect();
        let topology = Topology::from_edges(labels, &raw)?;
        Ok(Pruned { topology, node_map })
    }

    /// Serializes to the edge-list format; loading the result reproduces the
    /// same ids because endpoints are emitted in edge-id order.
    pub fn to_edge_list(&self) -> String {
        let mut out = String::new();
        for e in &self.edges {
            writeln!(
                out,
                "{} {} {}",
                self.labels[e.u], self.labels[e.v], e.capacity
            )
            .unwrap();
        }
        out
    }
}

/// Result of [`Topology::prune_degree_one`].
#[derive(Debug, Clone)]
pub struct Pruned {
    pub topology: Topology,
    /// Old node id -> new node id (`None` for removed nodes).
    pub node_map: Vec<Option<NodeId>>,
}

impl Pruned {
    pub fn removed(&self) -> usize {
        self.node_map.iter().filter(|m| m.is_none()).count()
    }
}

/// Reads a topology from a byte stream in the declared format.
pub fn load_topology(
    mut source: impl Read,
    format: TopologyFormat,
    source_name: &str,
) -> Result<Topology> {
    let mut text = String::new();
    source.read_to_string(&mut text)?;
    match format {
        TopologyFormat::EdgeList => parse_edge_list(&text, source_name),
        TopologyFormat::GraphmlLite => parse_graphml(&text, source_name),
    }
}

/// Parses the edge-list format: one `src dst [capacity]` per line, `#` starts
/// a comment, labels are arbitrary tokens mapped to dense ids in
/// first-appearance order, missing capacities default to 1.0.
pub fn parse_edge_list(text: &str, source_name: &str) -> Result<Topology> {
    let mut labels: Vec<String> = Vec::new();
    let mut ids: HashMap<String, NodeId> = HashMap::new();
    let mut raw: Vec<(NodeId, NodeId, f64)> = Vec::new();
    for (lineno, line) in text.lines().enumerate() {
        let line = line.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let tokens: Vec<&str> = line.split_whitespace().collect();
        if tokens.len() < 2 || tokens.len() > 3 {
            return Err(Error::parse(
                source_name,
                lineno + 1,
                format!("expected `src dst [capacity]`, found {} token(s)", tokens.len()),
            ));
        }
        let mut id_of = |tok: &str| -> NodeId {
            if let Some(&id) = ids.get(tok) {
                return id;
            }
            let id = labels.len();
            labels.push(tok.to_string());
            ids.insert(tok.to_string(), id);
            id
        };
        let u = id_of(tokens[0]);
        let v = id_of(tokens[1]);
        let capacity = match tokens.get(2) {
            None => 1.0,
            Some(t) => t.parse::<f64>().map_err(|_| {
                Error::parse(source_name, lineno + 1, format!("bad capacity `{t}`"))
            })?,
        };
        raw.push((u, v, capacity));
    }
    if raw.is_empty() {
        return Err(Error::parse(source_name, 1, "no edges in input"));
    }
    Topology::from_edges(labels, &raw).map_err(|e| match e {
        Error::Topology(msg) => Error::parse(source_name, 1, msg),
        other => other,
    })
}

/// Parses the GraphML subset: `<node id=..>`, `<edge source=.. target=..>`,
/// and an optional capacity `<data>` key declared via
/// `<key attr.name="capacity" id=..>`. All other keys are ignored.
pub fn parse_graphml(text: &str, source_name: &str) -> Result<Topology> {
    use quick_xml::events::Event;
    use quick_xml::Reader;

    let mut reader = Reader::from_str(text);
    reader.config_mut().trim_text(true);

    let mut labels: Vec<String> = Vec::new();
    let mut ids: HashMap<String, NodeId> = HashMap::new();
    let mut raw: Vec<(NodeId, NodeId, f64)> = Vec::new();
    let mut capacity_key: Option<String> = None;
    // Edge currently open, plus the data key whose text we are inside.
    let mut open_edge: Option<(NodeId, NodeId, f64)> = None;
    let mut open_key: Option<String> = None;
    let mut element_count = 0usize;

    let fail = |count: usize, msg: String| Error::parse(source_name, count, msg);

    let attr_of = |e: &quick_xml::events::BytesStart, name: &str| -> Option<String> {
        e.attributes().flatten().find_map(|a| {
            (a.key.as_ref() == name.as_bytes())
                .then(|| String::from_utf8_lossy(&a.value).into_owned())
        })
    };

    loop {
        let event = reader
            .read_event()
            .map_err(|e| fail(element_count, format!("malformed XML: {e}")))?;
        match event {
            Event::Start(ref e) | Event::Empty(ref e) => {
                element_count += 1;
                let self_closing = matches!(event, Event::Empty(_));
                match e.name().as_ref() {
                    b"key" => {
                        let is_capacity = attr_of(e, "attr.name").as_deref() == Some("capacity")
                            || attr_of(e, "id").as_deref() == Some("capacity");
                        if is_capacity {
                            capacity_key = attr_of(e, "id");
                        }
                    }
                    b"node" => {
                        let id = attr_of(e, "id").ok_or_else(|| {
                            fail(element_count, "node element without id".into())
                        })?;
                        if ids.contains_key(&id) {
                            return Err(fail(element_count, format!("duplicate node id `{id}`")));
                        }
                        ids.insert(id.clone(), labels.len());
                        labels.push(id);
                    }
                    b"edge" => {
                        let src = attr_of(e, "source").ok_or_else(|| {
                            fail(element_count, "edge element without source".into())
                        })?;
                        let dst = attr_of(e, "target").ok_or_else(|| {
                            fail(element_count, "edge element without target".into())
                        })?;
                        let lookup = |key: &str| {
                            ids.get(key).copied().ok_or_else(|| {
                                fail(element_count, format!("edge references unknown node `{key}`"))
                            })
                        };
                        let parsed = (lookup(&src)?, lookup(&dst)?, 1.0);
                        if self_closing {
                            raw.push(parsed);
                        } else {
                            open_edge = Some(parsed);
                        }
                    }
                    b"data" if !self_closing && open_edge.is_some() => {
                        open_key = attr_of(e, "key");
                    }
                    _ => {}
                }
            }
            Event::Text(t) => {
                if let (Some(edge), Some(key)) = (open_edge.as_mut(), open_key.as_ref()) {
                    if capacity_key.as_deref() == Some(key.as_str()) {
                        let body = t.decode().map_err(|e| {
                            fail(element_count, format!("bad text encoding: {e}"))
                        })?;
                        edge.2 = body.trim().parse::<f64>().map_err(|_| {
                            fail(element_count, format!("bad capacity `{}`", body.trim()))
                        })?;
                    }
                }
            }
            Event::End(ref e) => match e.name().as_ref() {
                b"edge" => {
                    if let Some(edge) = open_edge.take() {
                        raw.push(edge);
                    }
                }
                b"data" => open_key = None,
                _ => {}
            },
            Event::Eof => break,
            _ => {}
        }
    }
    if raw.is_empty() {
        return Err(fail(element_count, "no edges in input".into()));
    }
    Topology::from_edges(labels, &raw).map_err(|e| match e {
        Error::Topology(msg) => fail(element_count, msg),
        other => other,
    })
}

/// Generates a random connected unit-capacity topology: a random recursive
/// tree plus `extra_edges` distinct chords. Deterministic under `seed` with a
/// fixed-algorithm generator, so golden values frozen against it stay valid.
pub fn random_connected(n: usize, extra_edges: usize, seed: u64) -> Topology {
    assert!(n >= 2, "need at least two nodes");
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let labels: Vec<String> = (0..n).map(|i| format!("n{i}")).collect();
    let mut raw: Vec<(NodeId, NodeId, f64)> = Vec::new();
    let mut present: HashMap<(NodeId, NodeId), ()> = HashMap::new();
    for v in 1..n {
        let u = rng.random_range(0..v);
        present.insert((u, v), ());
        raw.push((u, v, 1.0));
    }
    let max_edges = n * (n - 1) / 2;
    let target = (raw.len() + extra_edges).min(max_edges);
    while raw.len() < target {
        let u = rng.random_range(0..n);
        let v = rng.random_range(0..n);
        if u == v {
            continue;
        }
        let key = (u.min(v), u.max(v));
        if present.contains_key(&key) {
            continue;
        }
        present.insert(key, ());
        raw.push((key.0, key.1, 1.0));
    }
    Topology::from_edges(labels, &raw).expect("generator produces a valid topology")
}
