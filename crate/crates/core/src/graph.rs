//! Scheduling graph: weighted DAG with memory weights on nodes and
//! communication costs plus difference constants on edges.
//!
//! An edge `(src, dst)` with constant `c` encodes the difference constraint
//! `stage(src) - stage(dst) <= c`. Plain data edges use `c = 0`, which allows
//! chaining (parent and child in the same stage).

use std::collections::{BinaryHeap, HashMap, HashSet};
use std::cmp::Reverse;
use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

fn default_weight() -> f64 {
    1.0
}

fn is_zero(c: &i64) -> bool {
    *c == 0
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Node {
    pub id: String,
    #[serde(default = "default_weight")]
    pub mem: f64,
}

impl Node {
    pub fn new(id: impl Into<String>, mem: f64) -> Self {
        Self { id: id.into(), mem }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Edge {
    pub src: String,
    pub dst: String,
    #[serde(default = "default_weight")]
    pub comm: f64,
    /// Difference constant: `stage(src) - stage(dst) <= sdc_c`.
    #[serde(rename = "c", default, skip_serializing_if = "is_zero")]
    pub sdc_c: i64,
}

impl Edge {
    pub fn new(src: impl Into<String>, dst: impl Into<String>, comm: f64, sdc_c: i64) -> Self {
        Self {
            src: src.into(),
            dst: dst.into(),
            comm,
            sdc_c,
        }
    }
}

/// Unvalidated node and edge lists, exactly as they appear on disk.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct GraphData {
    #[serde(default)]
    pub nodes: Vec<Node>,
    #[serde(default)]
    pub edges: Vec<Edge>,
}

#[derive(Debug, Clone, PartialEq)]
pub enum Violation {
    DuplicateId(String),
    NegativeWeight { item: String, value: f64 },
    UnknownEndpoint { edge: usize, id: String },
    SelfLoop { edge: usize, id: String },
    Cycle { nodes: Vec<String> },
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Violation::DuplicateId(id) => write!(f, "duplicate id {id:?}"),
            Violation::NegativeWeight { item, value } => {
                write!(f, "negative weight {value} on {item}")
            }
            Violation::UnknownEndpoint { edge, id } => {
                write!(f, "edge #{edge} refers to unknown node {id:?}")
            }
            Violation::SelfLoop { edge, id } => write!(f, "edge #{edge} is a self loop on {id:?}"),
            Violation::Cycle { nodes } => write!(f, "cycle through nodes {}", nodes.join(", ")),
        }
    }
}

#[derive(Debug, Error)]
pub enum GraphError {
    #[error("malformed graph: {0}")]
    Parse(String),
    #[error("invalid graph: {}", .0.iter().map(|v| v.to_string()).collect::<Vec<_>>().join("; "))]
    Invalid(Vec<Violation>),
}

/// Checks a raw graph. Never aborts: every problem found is reported.
pub fn validate(data: &GraphData) -> Vec<Violation> {
    let mut violations = Vec::new();
    let mut index: HashMap<&str, usize> = HashMap::new();
    for (i, node) in data.nodes.iter().enumerate() {
        if index.insert(node.id.as_str(), i).is_some() {
            violations.push(Violation::DuplicateId(node.id.clone()));
        }
        if !(node.mem >= 0.0 && node.mem.is_finite()) {
            violations.push(Violation::NegativeWeight {
                item: format!("node {:?}", node.id),
                value: node.mem,
            });
        }
    }

    let mut resolved = true;
    let mut adj = vec![Vec::new(); data.nodes.len()];
    let mut indegree = vec![0usize; data.nodes.len()];
    for (e, edge) in data.edges.iter().enumerate() {
        if !(edge.comm >= 0.0 && edge.comm.is_finite()) {
            violations.push(Violation::NegativeWeight {
                item: format!("edge #{e} ({} -> {})", edge.src, edge.dst),
                value: edge.comm,
            });
        }
        if edge.src == edge.dst {
            violations.push(Violation::SelfLoop {
                edge: e,
                id: edge.src.clone(),
            });
        }
        let mut ends = [0usize; 2];
        for (slot, id) in [&edge.src, &edge.dst].into_iter().enumerate() {
            match index.get(id.as_str()) {
                Some(&i) => ends[slot] = i,
                None => {
                    resolved = false;
                    violations.push(Violation::UnknownEndpoint {
                        edge: e,
                        id: id.clone(),
                    });
                }
            }
        }
        if resolved && edge.src != edge.dst {
            adj[ends[0]].push(ends[1]);
            indegree[ends[1]] += 1;
        }
    }

    if resolved {
        // Kahn: anything left with nonzero indegree sits on or behind a cycle.
        let mut queue: Vec<usize> = (0..indegree.len()).filter(|&v| indegree[v] == 0).collect();
        let mut seen = 0;
        while let Some(u) = queue.pop() {
            seen += 1;
            for &w in &adj[u] {
                indegree[w] -= 1;
                if indegree[w] == 0 {
                    queue.push(w);
                }
            }
        }
        if seen < data.nodes.len() {
            let nodes = (0..indegree.len())
                .filter(|&v| indegree[v] > 0)
                .map(|v| data.nodes[v].id.clone())
                .collect();
            violations.push(Violation::Cycle { nodes });
        }
    }
    violations
}

/// A validated, immutable scheduling graph.
#[derive(Debug, Clone)]
pub struct SchedGraph {
    data: GraphData,
    index: HashMap<String, usize>,
    endpoints: Vec<(usize, usize)>,
    incoming: Vec<Vec<usize>>,
    outgoing: Vec<Vec<usize>>,
    topo: Vec<usize>,
}

impl SchedGraph {
    pub fn from_data(data: GraphData) -> Result<Self, GraphError> {
        let violations = validate(&data);
        if !violations.is_empty() {
            return Err(GraphError::Invalid(violations));
        }
        let index: HashMap<String, usize> = data
            .nodes
            .iter()
            .enumerate()
            .map(|(i, n)| (n.id.clone(), i))
            .collect();
        let n = data.nodes.len();
        let mut incoming = vec![Vec::new(); n];
        let mut outgoing = vec![Vec::new(); n];
        let endpoints: Vec<(usize, usize)> = data
            .edges
            .iter()
            .enumerate()
            .map(|(e, edge)| {
                let (s, d) = (index[&edge.src], index[&edge.dst]);
                outgoing[s].push(e);
                incoming[d].push(e);
                (s, d)
            })
            .collect();
        let topo = kahn_order(n, &endpoints, &outgoing);
        Ok(Self {
            data,
            index,
            endpoints,
            incoming,
            outgoing,
            topo,
        })
    }

    pub fn new(nodes: Vec<Node>, edges: Vec<Edge>) -> Result<Self, GraphError> {
        Self::from_data(GraphData { nodes, edges })
    }

    pub fn data(&self) -> &GraphData {
        &self.data
    }

    pub fn nodes(&self) -> &[Node] {
        &self.data.nodes
    }

    pub fn edges(&self) -> &[Edge] {
        &self.data.edges
    }

    pub fn node_count(&self) -> usize {
        self.data.nodes.len()
    }

    pub fn edge_count(&self) -> usize {
        self.data.edges.len()
    }

    pub fn node_index(&self, id: &str) -> Option<usize> {
        self.index.get(id).copied()
    }

    /// `(src, dst)` node indices of edge `e`.
    pub fn endpoints(&self, e: usize) -> (usize, usize) {
        self.endpoints[e]
    }

    pub fn incoming(&self, v: usize) -> &[usize] {
        &self.incoming[v]
    }

    pub fn outgoing(&self, v: usize) -> &[usize] {
        &self.outgoing[v]
    }

    pub fn is_source(&self, v: usize) -> bool {
        self.incoming[v].is_empty()
    }

    pub fn mems(&self) -> Vec<f64> {
        self.data.nodes.iter().map(|n| n.mem).collect()
    }

    pub fn total_mem(&self) -> f64 {
        self.data.nodes.iter().map(|n| n.mem).sum()
    }

    pub fn total_comm(&self) -> f64 {
        self.data.edges.iter().map(|e| e.comm).sum()
    }

    /// Node indices in topological order, ties broken by declaration order.
    pub fn topological_order(&self) -> &[usize] {
        &self.topo
    }

    pub fn topological_ids(&self) -> Vec<&str> {
        self.topo.iter().map(|&v| self.data.nodes[v].id.as_str()).collect()
    }

    /// Minimum legal stage of every node, ignoring the upper latency bound.
    pub fn earliest_stages(&self) -> Vec<usize> {
        let mut lp = vec![0i64; self.node_count()];
        for &v in &self.topo {
            for &e in &self.incoming[v] {
                let u = self.endpoints[e].0;
                lp[v] = lp[v].max(lp[u] - self.data.edges[e].sdc_c);
            }
        }
        lp.into_iter().map(|x| x as usize).collect()
    }

    /// Smallest latency bound that admits a legal schedule.
    pub fn min_feasible_latency(&self) -> usize {
        1 + self.earliest_stages().into_iter().max().unwrap_or(0)
    }

    /// Maximum legal stage of every node under latency `latency`. Entries may
    /// be negative when `latency` is below [`Self::min_feasible_latency`].
    pub fn latest_stages(&self, latency: usize) -> Vec<i64> {
        let top = latency as i64 - 1;
        let mut lst = vec![top; self.node_count()];
        for &v in self.topo.iter().rev() {
            for &e in &self.outgoing[v] {
                let w = self.endpoints[e].1;
                lst[v] = lst[v].min(lst[w] + self.data.edges[e].sdc_c);
            }
        }
        lst
    }

    /// Checks a stage assignment against the latency bound and every edge.
    pub fn check_legal(&self, schedule: &Schedule, latency: usize) -> Result<(), Vec<LegalityViolation>> {
        let mut out = Vec::new();
        if schedule.len() != self.node_count() {
            out.push(LegalityViolation::WrongLength {
                expected: self.node_count(),
                got: schedule.len(),
            });
            return Err(out);
        }
        for (v, &s) in schedule.stages().iter().enumerate() {
            if s >= latency {
                out.push(LegalityViolation::OutOfRange {
                    node: self.data.nodes[v].id.clone(),
                    stage: s,
                    latency,
                });
            }
        }
        for (e, &(u, w)) in self.endpoints.iter().enumerate() {
            let diff = schedule.stage(u) as i64 - schedule.stage(w) as i64;
            if diff > self.data.edges[e].sdc_c {
                out.push(LegalityViolation::Edge {
                    edge: e,
                    src: self.data.edges[e].src.clone(),
                    dst: self.data.edges[e].dst.clone(),
                });
            }
        }
        if out.is_empty() {
            Ok(())
        } else {
            Err(out)
        }
    }

    pub fn is_legal(&self, schedule: &Schedule, latency: usize) -> bool {
        self.check_legal(schedule, latency).is_ok()
    }

    /// Serializes to the JSON graph format.
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(&self.data).expect("graph data is always serializable")
    }
}

fn kahn_order(n: usize, endpoints: &[(usize, usize)], outgoing: &[Vec<usize>]) -> Vec<usize> {
    let mut indegree = vec![0usize; n];
    for &(_, d) in endpoints {
        indegree[d] += 1;
    }
    let mut ready: BinaryHeap<Reverse<usize>> =
        (0..n).filter(|&v| indegree[v] == 0).map(Reverse).collect();
    let mut order = Vec::with_capacity(n);
    while let Some(Reverse(u)) = ready.pop() {
        order.push(u);
        for &e in &outgoing[u] {
            let w = endpoints[e].1;
            indegree[w] -= 1;
            if indegree[w] == 0 {
                ready.push(Reverse(w));
            }
        }
    }
    order
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum LegalityViolation {
    WrongLength { expected: usize, got: usize },
    OutOfRange { node: String, stage: usize, latency: usize },
    Edge { edge: usize, src: String, dst: String },
}

impl fmt::Display for LegalityViolation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            LegalityViolation::WrongLength { expected, got } => {
                write!(f, "schedule covers {got} nodes, graph has {expected}")
            }
            LegalityViolation::OutOfRange { node, stage, latency } => {
                write!(f, "node {node:?} at stage {stage} outside [0, {}]", latency.saturating_sub(1))
            }
            LegalityViolation::Edge { edge, src, dst } => {
                write!(f, "edge #{edge} ({src} -> {dst}) violated")
            }
        }
    }
}

/// Hard stage assignment, indexed by node declaration order.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Schedule(Vec<usize>);

impl Schedule {
    pub fn new(stages: Vec<usize>) -> Self {
        Self(stages)
    }

    pub fn stages(&self) -> &[usize] {
        &self.0
    }

    pub fn stage(&self, v: usize) -> usize {
        self.0[v]
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn into_inner(self) -> Vec<usize> {
        self.0
    }
}

impl From<Vec<usize>> for Schedule {
    fn from(v: Vec<usize>) -> Self {
        Self(v)
    }
}

/// Parses and validates a graph. JSON when the text starts with `{`,
/// otherwise the whitespace-separated edge-list format.
pub fn load_graph(source: &str) -> Result<SchedGraph, GraphError> {
    let data = if source.trim_start().starts_with('{') {
        serde_json::from_str::<GraphData>(source).map_err(|e| GraphError::Parse(e.to_string()))?
    } else {
        parse_edge_list(source)?
    };
    SchedGraph::from_data(data)
}

pub fn save_graph(g: &SchedGraph) -> String {
    g.to_json()
}

/// `src dst [comm] [c]` per line, `#` starts a comment. Nodes are implied,
/// in order of first appearance, with unit memory.
pub fn parse_edge_list(text: &str) -> Result<GraphData, GraphError> {
    let mut data = GraphData::default();
    let mut seen = HashSet::new();
    for (lineno, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("");
        let fields: Vec<&str> = line.split_whitespace().collect();
        if fields.is_empty() {
            continue;
        }
        if fields.len() < 2 || fields.len() > 4 {
            return Err(GraphError::Parse(format!(
                "line {}: expected `src dst [comm] [c]`, got {} fields",
                lineno + 1,
                fields.len()
            )));
        }
        let comm = match fields.get(2) {
            Some(s) => s
                .parse::<f64>()
                .map_err(|e| GraphError::Parse(format!("line {}: comm {s:?}: {e}", lineno + 1)))?,
            None => 1.0,
        };
        let c = match fields.get(3) {
            Some(s) => s
                .parse::<i64>()
                .map_err(|e| GraphError::Parse(format!("line {}: c {s:?}: {e}", lineno + 1)))?,
            None => 0,
        };
        for id in &fields[..2] {
            if seen.insert(id.to_string()) {
                data.nodes.push(Node::new(*id, 1.0));
            }
        }
        data.edges.push(Edge::new(fields[0], fields[1], comm, c));
    }
    Ok(data)
}
