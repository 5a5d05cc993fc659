//! Time-dependent fastest paths over a frozen snapshot plus overlay.
//!
//! The search is label-setting on arrival time. It is exact because every
//! edge is FIFO inside one snapshot (see [`crate::network`]). Alternative
//! routes come from re-searching with the edges of each found route
//! penalized by [`PENALTY_FACTOR`].

use std::cmp::Ordering;
use std::collections::{BinaryHeap, BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::network::traversal::edge_pass;
use crate::network::{
    arrival_time, EdgeIdx, NetworkError, NetworkOverlay, NodeIdx, RoadNetwork, TrafficState, TravelTime,
};

pub const PENALTY_FACTOR: f64 = 1.5;
/// Upper bound on penalized re-searches when generating alternatives.
pub const MAX_DEVIATION_ROUNDS: usize = 32;
/// Consecutive rounds without a new route before generation stops.
pub const STALL_LIMIT: usize = 3;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum RouterError {
    #[error("no route from {src} to {dst}")]
    NoRoute { src: String, dst: String },
    #[error("route is not contiguous at position {0}")]
    NotContiguous(usize),
    #[error("k must be at least 1")]
    InvalidK,
    #[error(transparent)]
    Network(#[from] NetworkError),
}

/// A timed path. Entry times are those of the snapshot/overlay the route
/// was evaluated under.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Route {
    origin: NodeIdx,
    destination: NodeIdx,
    edges: Vec<EdgeIdx>,
    departure_time_s: f64,
    entry_times_s: Vec<f64>,
    arrival_time_s: f64,
}

impl Route {
    /// Folds `edges` from `departure_time_s`. `Ok(None)` if any edge blocks.
    pub fn evaluate(
        net: &RoadNetwork,
        origin: NodeIdx,
        edges: Vec<EdgeIdx>,
        departure_time_s: f64,
        state: &TrafficState,
        overlay: &NetworkOverlay,
    ) -> Result<Option<Route>, RouterError> {
        let destination = check_contiguous(net, origin, &edges)?;
        let mut entry_times_s = Vec::with_capacity(edges.len());
        let mut t = departure_time_s;
        for &e in &edges {
            entry_times_s.push(t);
            match arrival_time(net, e, t, state, overlay)? {
                Some(next) => t = next,
                None => return Ok(None),
            }
        }
        Ok(Some(Route { origin, destination, edges, departure_time_s, entry_times_s, arrival_time_s: t }))
    }

    /// A path that cannot currently be driven: no entry times and an
    /// infinite arrival. Lets level evaluation run on blocked plans.
    pub fn blocked(
        net: &RoadNetwork,
        origin: NodeIdx,
        edges: Vec<EdgeIdx>,
        departure_time_s: f64,
    ) -> Result<Route, RouterError> {
        let destination = check_contiguous(net, origin, &edges)?;
        Ok(Route { origin, destination, edges, departure_time_s, entry_times_s: Vec::new(), arrival_time_s: f64::INFINITY })
    }

    /// Timed route if drivable, else [`Route::blocked`].
    pub fn evaluate_or_blocked(
        net: &RoadNetwork,
        origin: NodeIdx,
        edges: Vec<EdgeIdx>,
        departure_time_s: f64,
        state: &TrafficState,
        overlay: &NetworkOverlay,
    ) -> Result<Route, RouterError> {
        match Route::evaluate(net, origin, edges.clone(), departure_time_s, state, overlay)? {
            Some(r) => Ok(r),
            None => Route::blocked(net, origin, edges, departure_time_s),
        }
    }

    pub fn origin(&self) -> NodeIdx {
        self.origin
    }

    pub fn destination(&self) -> NodeIdx {
        self.destination
    }

    pub fn edges(&self) -> &[EdgeIdx] {
        &self.edges
    }

    pub fn departure_time_s(&self) -> f64 {
        self.departure_time_s
    }

    pub fn entry_times_s(&self) -> &[f64] {
        &self.entry_times_s
    }

    pub fn arrival_time_s(&self) -> f64 {
        self.arrival_time_s
    }

    pub fn total_eta_s(&self) -> f64 {
        self.arrival_time_s - self.departure_time_s
    }

    pub fn len(&self) -> usize {
        self.edges.len()
    }

    pub fn is_empty(&self) -> bool {
        self.edges.is_empty()
    }

    pub fn edge_ids<'a>(&self, net: &'a RoadNetwork) -> Vec<&'a str> {
        self.edges.iter().map(|&e| net.edge(e).id.as_str()).collect()
    }

    /// Edge set used for duplicate detection.
    pub fn edge_set(&self) -> BTreeSet<EdgeIdx> {
        self.edges.iter().copied().collect()
    }

    /// True if both routes traverse the same edge sequence.
    pub fn same_path(&self, other: &Route) -> bool {
        self.origin == other.origin && self.edges == other.edges
    }
}

fn check_contiguous(net: &RoadNetwork, origin: NodeIdx, edges: &[EdgeIdx]) -> Result<NodeIdx, RouterError> {
    let mut at = origin;
    for (i, &e) in edges.iter().enumerate() {
        net.check_edge(e)?;
        if net.from_node(e) != at {
            return Err(RouterError::NotContiguous(i));
        }
        at = net.to_node(e);
    }
    Ok(at)
}

/// Folds traversal along `route` departing at `t0_s`.
pub fn route_eta(
    net: &RoadNetwork,
    route: &Route,
    t0_s: f64,
    state: &TrafficState,
    overlay: &NetworkOverlay,
) -> Result<TravelTime, RouterError> {
    path_eta(net, route.origin, &route.edges, t0_s, state, overlay)
}

/// [`route_eta`] for a bare edge sequence starting at `origin`.
pub fn path_eta(
    net: &RoadNetwork,
    origin: NodeIdx,
    edges: &[EdgeIdx],
    t0_s: f64,
    state: &TrafficState,
    overlay: &NetworkOverlay,
) -> Result<TravelTime, RouterError> {
    check_contiguous(net, origin, edges)?;
    let mut t = t0_s;
    for &e in edges {
        match arrival_time(net, e, t, state, overlay)? {
            Some(next) => t = next,
            None => return Ok(TravelTime::Blocked),
        }
    }
    Ok(TravelTime::Finite(t - t0_s))
}

struct Label {
    arrival: f64,
    path: Vec<EdgeIdx>,
    ranks: Vec<u32>,
    node: NodeIdx,
}

impl Label {
    fn key_cmp(&self, other: &Self) -> Ordering {
        self.arrival
            .total_cmp(&other.arrival)
            .then(self.path.len().cmp(&other.path.len()))
            .then_with(|| self.ranks.cmp(&other.ranks))
    }
}

impl PartialEq for Label {
    fn eq(&self, other: &Self) -> bool {
        self.key_cmp(other) == Ordering::Equal && self.node == other.node
    }
}

impl Eq for Label {}

impl PartialOrd for Label {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for Label {
    // reversed: BinaryHeap is a max-heap
    fn cmp(&self, other: &Self) -> Ordering {
        other.key_cmp(self).then(other.node.cmp(&self.node))
    }
}

/// Label-setting search with `step(edge, entry) -> exit` as the edge model.
/// Labels are ordered by (arrival, edge count, edge-id sequence).
fn search<F>(
    net: &RoadNetwork,
    src: NodeIdx,
    dst: NodeIdx,
    t0_s: f64,
    mut step: F,
) -> Result<Option<(Vec<EdgeIdx>, f64)>, NetworkError>
where
    F: FnMut(EdgeIdx, f64) -> Result<Option<f64>, NetworkError>,
{
    let n = net.node_count();
    let mut best: Vec<Option<Label>> = (0..n).map(|_| None).collect();
    let mut settled = vec![false; n];
    let mut heap = BinaryHeap::new();
    heap.push(Label { arrival: t0_s, path: Vec::new(), ranks: Vec::new(), node: src });

    while let Some(label) = heap.pop() {
        let u = label.node;
        if settled[u.0] {
            continue;
        }
        settled[u.0] = true;
        if u == dst {
            return Ok(Some((label.path, label.arrival)));
        }
        for &e in net.out_edges(u) {
            let v = net.to_node(e);
            if settled[v.0] {
                continue;
            }
            let Some(arrival) = step(e, label.arrival)? else { continue };
            let mut path = label.path.clone();
            path.push(e);
            let mut ranks = label.ranks.clone();
            ranks.push(net.edge_rank(e));
            let cand = Label { arrival, path, ranks, node: v };
            let improves = match &best[v.0] {
                None => true,
                Some(cur) => cand.key_cmp(cur) == Ordering::Less,
            };
            if improves {
                best[v.0] = Some(Label {
                    arrival: cand.arrival,
                    path: cand.path.clone(),
                    ranks: cand.ranks.clone(),
                    node: v,
                });
                heap.push(cand);
            }
        }
    }
    Ok(None)
}

#[cfg(debug_assertions)]
fn assert_fifo(net: &RoadNetwork, e: EdgeIdx, t: f64, state: &TrafficState, overlay: &NetworkOverlay) {
    let a = arrival_time(net, e, t, state, overlay).ok().flatten();
    let b = arrival_time(net, e, t + 1.0, state, overlay).ok().flatten();
    if let (Some(a), Some(b)) = (a, b) {
        debug_assert!(a <= b + 1e-9 * b.abs().max(1.0), "edge {e} violates FIFO at t={t}: {a} > {b}");
    }
}

/// Earliest-arrival route from `src` to `dst` departing at `t0_s`.
pub fn fastest_route(
    net: &RoadNetwork,
    state: &TrafficState,
    overlay: &NetworkOverlay,
    src: NodeIdx,
    dst: NodeIdx,
    t0_s: f64,
) -> Result<Route, RouterError> {
    let found = search(net, src, dst, t0_s, |e, t| {
        #[cfg(debug_assertions)]
        assert_fifo(net, e, t, state, overlay);
        arrival_time(net, e, t, state, overlay)
    })?;
    let (edges, _) = found.ok_or_else(|| no_route(net, src, dst))?;
    Route::evaluate(net, src, edges, t0_s, state, overlay)?.ok_or_else(|| no_route(net, src, dst))
}

fn no_route(net: &RoadNetwork, src: NodeIdx, dst: NodeIdx) -> RouterError {
    RouterError::NoRoute { src: net.node(src).id.clone(), dst: net.node(dst).id.clone() }
}

fn route_order(net: &RoadNetwork, a: &Route, b: &Route) -> Ordering {
    a.total_eta_s()
        .total_cmp(&b.total_eta_s())
        .then(a.len().cmp(&b.len()))
        .then_with(|| {
            let ra: Vec<u32> = a.edges.iter().map(|&e| net.edge_rank(e)).collect();
            let rb: Vec<u32> = b.edges.iter().map(|&e| net.edge_rank(e)).collect();
            ra.cmp(&rb)
        })
}

/// Up to `k` edge-set-distinct routes, fastest first, in non-decreasing ETA.
///
/// The candidate pool does not depend on `k`, so shorter answers are
/// prefixes of longer ones.
pub fn k_routes(
    net: &RoadNetwork,
    state: &TrafficState,
    overlay: &NetworkOverlay,
    src: NodeIdx,
    dst: NodeIdx,
    t0_s: f64,
    k: usize,
) -> Result<Vec<Route>, RouterError> {
    if k == 0 {
        return Err(RouterError::InvalidK);
    }
    let best = fastest_route(net, state, overlay, src, dst, t0_s)?;
    if k == 1 || best.is_empty() {
        return Ok(vec![best]);
    }

    let mut seen: BTreeSet<BTreeSet<EdgeIdx>> = BTreeSet::new();
    seen.insert(best.edge_set());
    let mut penalties: BTreeMap<EdgeIdx, i32> = BTreeMap::new();
    let mut last = best.edges.clone();
    let mut others = Vec::new();
    let mut stall = 0;

    for _ in 0..MAX_DEVIATION_ROUNDS {
        if stall >= STALL_LIMIT {
            break;
        }
        for &e in &last {
            *penalties.entry(e).or_insert(0) += 1;
        }
        let found = search(net, src, dst, t0_s, |e, t| {
            let scale = penalties.get(&e).map_or(1.0, |&n| PENALTY_FACTOR.powi(n));
            Ok(edge_pass(net, e, t, state, overlay, scale)?.map(|p| p.exit_s))
        })?;
        let Some((edges, _)) = found else { break };
        let set: BTreeSet<EdgeIdx> = edges.iter().copied().collect();
        last = edges.clone();
        if seen.insert(set) {
            if let Some(route) = Route::evaluate(net, src, edges, t0_s, state, overlay)? {
                others.push(route);
            }
            stall = 0;
        } else {
            stall += 1;
        }
    }

    others.sort_by(|a, b| route_order(net, a, b));
    let mut out = Vec::with_capacity(k.min(others.len() + 1));
    out.push(best);
    out.extend(others.into_iter().take(k - 1));
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::network::fixtures::trinet;
    use crate::network::{apply_update, load_network, EdgeDelta};

    fn ids(net: &RoadNetwork, r: &Route) -> Vec<String> {
        r.edge_ids(net).into_iter().map(String::from).collect()
    }

    #[test]
    fn trinet_prefers_two_hop_path() {
        let net = trinet();
        let s = TrafficState::free_flow(&net);
        let ov = NetworkOverlay::new();
        let (a, c) = (net.node_idx("A").unwrap(), net.node_idx("C").unwrap());
        let r = fastest_route(&net, &s, &ov, a, c, 0.0).unwrap();
        assert_eq!(ids(&net, &r), ["e1", "e2"]);
        assert_eq!(r.total_eta_s(), 40.0);
        assert_eq!(r.entry_times_s(), &[0.0, 20.0]);
    }

    #[test]
    fn single_edge_network() {
        let net = load_network(
            r#"{"format": "mcrts-net/1", "nodes": [{"id": "A"}, {"id": "B"}],
                "edges": [{"id": "e", "from_node": "A", "to_node": "B", "length_m": 130, "speed_limit_mps": 13}]}"#,
        )
        .unwrap();
        let s = TrafficState::free_flow(&net);
        let ov = NetworkOverlay::new();
        let r = fastest_route(&net, &s, &ov, NodeIdx(0), NodeIdx(1), 5.0).unwrap();
        assert_eq!(r.edges(), &[EdgeIdx(0)]);
        let tt = crate::network::traversal_time(&net, EdgeIdx(0), 5.0, &s, &ov).unwrap();
        assert_eq!(TravelTime::Finite(r.total_eta_s()), tt);
    }

    #[test]
    fn fully_blocked_is_no_route() {
        let net = trinet();
        let halt = |id: &str| EdgeDelta { edge: id.into(), halted: Some(true), ..Default::default() };
        let s = apply_update(&net, &TrafficState::free_flow(&net), &[halt("e1"), halt("e3")], 0.0).unwrap();
        let (a, c) = (net.node_idx("A").unwrap(), net.node_idx("C").unwrap());
        let err = fastest_route(&net, &s, &NetworkOverlay::new(), a, c, 0.0).unwrap_err();
        assert_eq!(err, RouterError::NoRoute { src: "A".into(), dst: "C".into() });
        assert!(k_routes(&net, &s, &NetworkOverlay::new(), a, c, 0.0, 3).is_err());
    }

    #[test]
    fn k_routes_on_trinet() {
        let net = trinet();
        let s = TrafficState::free_flow(&net);
        let ov = NetworkOverlay::new();
        let (a, c) = (net.node_idx("A").unwrap(), net.node_idx("C").unwrap());
        let two = k_routes(&net, &s, &ov, a, c, 0.0, 2).unwrap();
        assert_eq!(two.len(), 2);
        assert_eq!(ids(&net, &two[0]), ["e1", "e2"]);
        assert_eq!(two[0].total_eta_s(), 40.0);
        assert_eq!(ids(&net, &two[1]), ["e3"]);
        assert_eq!(two[1].total_eta_s(), 60.0);

        let one = k_routes(&net, &s, &ov, a, c, 0.0, 1).unwrap();
        assert_eq!(one, vec![fastest_route(&net, &s, &ov, a, c, 0.0).unwrap()]);

        let ten = k_routes(&net, &s, &ov, a, c, 0.0, 10).unwrap();
        assert_eq!(ten, two);
        assert_eq!(k_routes(&net, &s, &ov, a, c, 0.0, 0), Err(RouterError::InvalidK));
    }

    #[test]
    fn route_eta_folds_and_blocks() {
        let net = trinet();
        let s = TrafficState::free_flow(&net);
        let ov = NetworkOverlay::new();
        let (a, c) = (net.node_idx("A").unwrap(), net.node_idx("C").unwrap());
        let r = fastest_route(&net, &s, &ov, a, c, 0.0).unwrap();
        assert_eq!(route_eta(&net, &r, 0.0, &s, &ov).unwrap(), TravelTime::Finite(40.0));
        assert_eq!(
            route_eta(&net, &r, 0.0, &s, &NetworkOverlay::default()).unwrap(),
            route_eta(&net, &r, 0.0, &s, &ov).unwrap()
        );
        let halted = apply_update(
            &net,
            &s,
            &[EdgeDelta { edge: "e2".into(), halted: Some(true), ..Default::default() }],
            0.0,
        )
        .unwrap();
        assert_eq!(route_eta(&net, &r, 0.0, &halted, &ov).unwrap(), TravelTime::Blocked);
        assert_eq!(
            path_eta(&net, a, &[EdgeIdx(1)], 0.0, &s, &ov),
            Err(RouterError::NotContiguous(0))
        );
    }

    #[test]
    fn source_equals_destination_is_empty_route() {
        let net = trinet();
        let s = TrafficState::free_flow(&net);
        let a = net.node_idx("A").unwrap();
        let r = fastest_route(&net, &s, &NetworkOverlay::new(), a, a, 7.0).unwrap();
        assert!(r.is_empty());
        assert_eq!(r.total_eta_s(), 0.0);
    }
}
