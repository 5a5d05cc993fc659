//! Road network model, traffic snapshots and EV-only overlays.
//!
//! A [`RoadNetwork`] is static once loaded. Everything time-varying lives in
//! [`TrafficState`] snapshots, and pre-emption privileges granted to a single
//! emergency vehicle live in a [`NetworkOverlay`]. The traversal-time function
//! in [`traversal`] combines all three.

mod overlay;
mod schema;
mod traffic;
pub(crate) mod traversal;

use std::collections::HashMap;
use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use overlay::{EdgeOverlay, NetworkOverlay};
pub use schema::{load_network, NetworkDocument, NETWORK_FORMAT};
pub use traffic::{apply_update, EdgeDelta, EdgeTraffic, TrafficState};
pub use traversal::{
    arrival_time, traversal_breakdown, traversal_time, Breakdown, TravelTime, CONGESTION_ALPHA,
    PED_DELAY_CAP_S, PED_DELAY_PER_PED_S, QUEUE_HEADWAY_S,
};

/// Dense index of a node inside one [`RoadNetwork`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct NodeIdx(pub usize);

/// Dense index of an edge inside one [`RoadNetwork`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct EdgeIdx(pub usize);

#[derive(Debug, Error, Clone, PartialEq)]
pub enum NetworkError {
    #[error("malformed network document: {0}")]
    MalformedDocument(String),
    #[error("edge {edge} references undeclared node {node:?}")]
    DanglingNodeReference { edge: String, node: String },
    #[error("duplicate id {0:?}")]
    DuplicateId(String),
    #[error("invalid field {path}: {reason}")]
    InvalidField { path: String, reason: String },
    #[error("unknown edge {0}")]
    UnknownEdge(String),
    #[error("unknown node {0}")]
    UnknownNode(String),
    #[error("value out of range at {path}: {reason}")]
    OutOfRangeValue { path: String, reason: String },
    #[error("update time {update_s} precedes snapshot time {snapshot_s}")]
    TimeRegression { snapshot_s: f64, update_s: f64 },
}

/// Fixed-time signal plan. Green is `[green_window[0], green_window[1])`
/// seconds into each cycle, with the cycle starting at `offset_s`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SignalPlan {
    pub cycle_s: f64,
    pub green_window: [f64; 2],
    #[serde(default)]
    pub offset_s: f64,
}

impl SignalPlan {
    pub fn green_len(&self) -> f64 {
        self.green_window[1] - self.green_window[0]
    }

    pub fn red_len(&self) -> f64 {
        self.cycle_s - self.green_len()
    }

    /// Earliest time `>= t` at which the signal shows green.
    pub fn next_green(&self, t: f64) -> f64 {
        let rel = t - self.offset_s - self.green_window[0];
        let cycles = (rel / self.cycle_s).floor();
        let into_green = rel - cycles * self.cycle_s;
        if into_green < self.green_len() {
            t
        } else {
            self.offset_s + self.green_window[0] + (cycles + 1.0) * self.cycle_s
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Node {
    pub id: String,
    #[serde(default)]
    pub signalized: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub signal: Option<SignalPlan>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Edge {
    pub id: String,
    pub from_node: String,
    pub to_node: String,
    pub length_m: f64,
    #[serde(default = "default_lanes")]
    pub lanes: u32,
    pub speed_limit_mps: f64,
    #[serde(default = "default_slope")]
    pub slope_factor: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub reverse_twin: Option<String>,
}

fn default_lanes() -> u32 {
    1
}

fn default_slope() -> f64 {
    1.0
}

impl Edge {
    /// Unimpeded traversal time at the posted limit and slope.
    pub fn free_flow_s(&self) -> f64 {
        self.length_m / (self.speed_limit_mps * self.slope_factor)
    }
}

/// Validated road network with resolved adjacency.
#[derive(Debug, Clone)]
pub struct RoadNetwork {
    nodes: Vec<Node>,
    edges: Vec<Edge>,
    node_index: HashMap<String, NodeIdx>,
    edge_index: HashMap<String, EdgeIdx>,
    edge_from: Vec<NodeIdx>,
    edge_to: Vec<NodeIdx>,
    twin: Vec<Option<EdgeIdx>>,
    out_edges: Vec<Vec<EdgeIdx>>,
    in_edges: Vec<Vec<EdgeIdx>>,
    edge_rank: Vec<u32>,
}

impl RoadNetwork {
    /// Validates raw nodes and edges and resolves all references.
    pub fn new(nodes: Vec<Node>, edges: Vec<Edge>) -> Result<Self, NetworkError> {
        let mut node_index = HashMap::with_capacity(nodes.len());
        for (i, n) in nodes.iter().enumerate() {
            let path = format!("nodes[{i}]");
            if n.id.is_empty() {
                return Err(invalid(&format!("{path}.id"), "empty id"));
            }
            if node_index.insert(n.id.clone(), NodeIdx(i)).is_some() {
                return Err(NetworkError::DuplicateId(n.id.clone()));
            }
            match (&n.signal, n.signalized) {
                (Some(plan), true) => validate_signal(plan, &path)?,
                (None, false) => {}
                (None, true) => {
                    return Err(invalid(&format!("{path}.signal"), "signalized node without a plan"))
                }
                (Some(_), false) => {
                    return Err(invalid(&format!("{path}.signalized"), "plan given on unsignalized node"))
                }
            }
        }

        let mut edge_index = HashMap::with_capacity(edges.len());
        let mut edge_from = Vec::with_capacity(edges.len());
        let mut edge_to = Vec::with_capacity(edges.len());
        for (i, e) in edges.iter().enumerate() {
            let path = format!("edges[{i}]");
            if e.id.is_empty() {
                return Err(invalid(&format!("{path}.id"), "empty id"));
            }
            if edge_index.insert(e.id.clone(), EdgeIdx(i)).is_some() {
                return Err(NetworkError::DuplicateId(e.id.clone()));
            }
            let from = *node_index.get(&e.from_node).ok_or_else(|| NetworkError::DanglingNodeReference {
                edge: e.id.clone(),
                node: e.from_node.clone(),
            })?;
            let to = *node_index.get(&e.to_node).ok_or_else(|| NetworkError::DanglingNodeReference {
                edge: e.id.clone(),
                node: e.to_node.clone(),
            })?;
            if from == to {
                return Err(invalid(&format!("{path}.to_node"), "self-loop edge"));
            }
            if !(e.length_m.is_finite() && e.length_m > 0.0) {
                return Err(invalid(&format!("{path}.length_m"), "must be > 0"));
            }
            if !(e.speed_limit_mps.is_finite() && e.speed_limit_mps > 0.0) {
                return Err(invalid(&format!("{path}.speed_limit_mps"), "must be > 0"));
            }
            if !(e.slope_factor > 0.0 && e.slope_factor <= 1.0) {
                return Err(invalid(&format!("{path}.slope_factor"), "must lie in (0, 1]"));
            }
            if e.lanes < 1 {
                return Err(invalid(&format!("{path}.lanes"), "must be >= 1"));
            }
            edge_from.push(from);
            edge_to.push(to);
        }

        let mut twin = Vec::with_capacity(edges.len());
        for (i, e) in edges.iter().enumerate() {
            let t = match &e.reverse_twin {
                None => None,
                Some(tid) => {
                    let path = format!("edges[{i}].reverse_twin");
                    let t = *edge_index
                        .get(tid)
                        .ok_or_else(|| invalid(&path, &format!("unknown edge {tid:?}")))?;
                    if edge_from[t.0] != edge_to[i] || edge_to[t.0] != edge_from[i] {
                        return Err(invalid(&path, "twin must run in the opposite direction"));
                    }
                    Some(t)
                }
            };
            twin.push(t);
        }

        let mut out_edges = vec![Vec::new(); nodes.len()];
        let mut in_edges = vec![Vec::new(); nodes.len()];
        for i in 0..edges.len() {
            out_edges[edge_from[i].0].push(EdgeIdx(i));
            in_edges[edge_to[i].0].push(EdgeIdx(i));
        }

        let mut by_id: Vec<usize> = (0..edges.len()).collect();
        by_id.sort_by(|&a, &b| edges[a].id.cmp(&edges[b].id));
        let mut edge_rank = vec![0u32; edges.len()];
        for (rank, &i) in by_id.iter().enumerate() {
            edge_rank[i] = rank as u32;
        }

        Ok(Self { nodes, edges, node_index, edge_index, edge_from, edge_to, twin, out_edges, in_edges, edge_rank })
    }

    pub fn nodes(&self) -> &[Node] {
        &self.nodes
    }

    pub fn edges(&self) -> &[Edge] {
        &self.edges
    }

    pub fn node_count(&self) -> usize {
        self.nodes.len()
    }

    pub fn edge_count(&self) -> usize {
        self.edges.len()
    }

    pub fn node(&self, n: NodeIdx) -> &Node {
        &self.nodes[n.0]
    }

    pub fn edge(&self, e: EdgeIdx) -> &Edge {
        &self.edges[e.0]
    }

    pub fn node_idx(&self, id: &str) -> Result<NodeIdx, NetworkError> {
        self.node_index.get(id).copied().ok_or_else(|| NetworkError::UnknownNode(id.to_string()))
    }

    pub fn edge_idx(&self, id: &str) -> Result<EdgeIdx, NetworkError> {
        self.edge_index.get(id).copied().ok_or_else(|| NetworkError::UnknownEdge(id.to_string()))
    }

    pub fn check_edge(&self, e: EdgeIdx) -> Result<(), NetworkError> {
        if e.0 < self.edges.len() {
            Ok(())
        } else {
            Err(NetworkError::UnknownEdge(format!("#{}", e.0)))
        }
    }

    pub fn from_node(&self, e: EdgeIdx) -> NodeIdx {
        self.edge_from[e.0]
    }

    pub fn to_node(&self, e: EdgeIdx) -> NodeIdx {
        self.edge_to[e.0]
    }

    pub fn reverse_twin(&self, e: EdgeIdx) -> Option<EdgeIdx> {
        self.twin[e.0]
    }

    pub fn out_edges(&self, n: NodeIdx) -> &[EdgeIdx] {
        &self.out_edges[n.0]
    }

    pub fn in_edges(&self, n: NodeIdx) -> &[EdgeIdx] {
        &self.in_edges[n.0]
    }

    /// Position of the edge id in lexicographic id order.
    pub fn edge_rank(&self, e: EdgeIdx) -> u32 {
        self.edge_rank[e.0]
    }

    /// Signal plan governing the stop line at the end of `e`, if any.
    pub fn downstream_signal(&self, e: EdgeIdx) -> Option<&SignalPlan> {
        let node = &self.nodes[self.edge_to[e.0].0];
        if node.signalized {
            node.signal.as_ref()
        } else {
            None
        }
    }

    /// Serializable form, suitable for writing back to a network file.
    pub fn to_document(&self) -> NetworkDocument {
        NetworkDocument {
            format: NETWORK_FORMAT.to_string(),
            nodes: self.nodes.clone(),
            edges: self.edges.clone(),
        }
    }
}

impl fmt::Display for EdgeIdx {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "#{}", self.0)
    }
}

fn invalid(path: &str, reason: &str) -> NetworkError {
    NetworkError::InvalidField { path: path.to_string(), reason: reason.to_string() }
}

fn validate_signal(plan: &SignalPlan, node_path: &str) -> Result<(), NetworkError> {
    let path = format!("{node_path}.signal");
    if !(plan.cycle_s.is_finite() && plan.cycle_s > 0.0) {
        return Err(invalid(&format!("{path}.cycle_s"), "must be > 0"));
    }
    let [start, end] = plan.green_window;
    if !(start >= 0.0 && start < end && end <= plan.cycle_s && end - start < plan.cycle_s) {
        return Err(invalid(
            &format!("{path}.green_window"),
            "green window must be nonempty and strictly inside [0, cycle_s)",
        ));
    }
    if !plan.offset_s.is_finite() {
        return Err(invalid(&format!("{path}.offset_s"), "must be finite"));
    }
    Ok(())
}
