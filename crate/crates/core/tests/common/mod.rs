#![allow(dead_code)]

use mcrts_core::analogy::{
    Criticality, DeadlinePolicy, EtaCell, MCTask, Mode, ScheduleDecision, VehicleCandidate, VehicleKind,
};
use mcrts_core::kernel::{parse_scenario, Scenario};
use mcrts_core::network::{
    arrival_time, Edge, EdgeDelta, EdgeIdx, EdgeOverlay, EdgeTraffic, NetworkOverlay, Node, NodeIdx, RoadNetwork,
    SignalPlan, TrafficState, TravelTime,
};
use mcrts_core::preemption::PreemptionLevel;
use mcrts_core::router::Route;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub struct World {
    pub net: RoadNetwork,
    pub state: TrafficState,
    pub overlay: NetworkOverlay,
}

/// Random directed network with at most `max_nodes` nodes and `max_edges`
/// edges, a random snapshot and (sometimes) a random overlay.
pub fn random_world(seed: u64, max_nodes: usize, max_edges: usize) -> World {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n = rng.random_range(2..=max_nodes);
    let nodes: Vec<Node> = (0..n)
        .map(|i| {
            let signal = rng.random_bool(0.4).then(|| {
                let cycle = rng.random_range(30.0..120.0);
                let start = rng.random_range(0.0..cycle / 2.0);
                let end = rng.random_range(start + 1.0..cycle);
                SignalPlan { cycle_s: cycle, green_window: [start, end], offset_s: rng.random_range(0.0..cycle) }
            });
            Node { id: format!("v{i}"), signalized: signal.is_some(), signal }
        })
        .collect();

    let m = rng.random_range(1..=max_edges);
    let mut pairs: Vec<(usize, usize)> = Vec::new();
    for _ in 0..m * 4 {
        if pairs.len() >= m {
            break;
        }
        let a = rng.random_range(0..n);
        let b = rng.random_range(0..n);
        if a != b && !pairs.contains(&(a, b)) {
            pairs.push((a, b));
        }
    }
    let edges: Vec<Edge> = pairs
        .iter()
        .map(|&(a, b)| {
            let twin = pairs.contains(&(b, a)).then(|| format!("e{b}_{a}"));
            Edge {
                id: format!("e{a}_{b}"),
                from_node: format!("v{a}"),
                to_node: format!("v{b}"),
                length_m: rng.random_range(50.0..2000.0),
                lanes: rng.random_range(1..=3),
                speed_limit_mps: rng.random_range(5.0..30.0),
                slope_factor: if rng.random_bool(0.3) { rng.random_range(0.5..1.0) } else { 1.0 },
                reverse_twin: twin,
            }
        })
        .collect();
    let net = RoadNetwork::new(nodes, edges).expect("generated network is valid");

    let records: Vec<EdgeTraffic> = (0..net.edge_count())
        .map(|_| EdgeTraffic {
            congestion: rng.random_range(0.0..=1.0),
            pedestrian_flow: if rng.random_bool(0.5) { rng.random_range(0.0..300.0) } else { 0.0 },
            queued_vehicles: rng.random_range(0..15),
            halted: rng.random_bool(0.1),
        })
        .collect();
    let state = TrafficState::from_records(&net, records, 0.0).expect("valid records");

    let mut overlay = NetworkOverlay::new();
    if rng.random_bool(0.3) {
        for i in 0..net.edge_count() {
            if rng.random_bool(0.3) {
                overlay.set(
                    EdgeIdx(i),
                    EdgeOverlay {
                        forced_green: rng.random_bool(0.5),
                        reserved_lane: rng.random_bool(0.5),
                        speed_cap_factor: if rng.random_bool(0.5) { 1.2 } else { 1.0 },
                        reverse_enabled: rng.random_bool(0.5),
                    },
                );
            }
        }
    }
    World { net, state, overlay }
}

/// Earliest arrival over every simple path, by exhaustive enumeration.
pub fn brute_force_arrival(w: &World, src: NodeIdx, dst: NodeIdx, t0: f64) -> Option<f64> {
    fn dfs(w: &World, at: NodeIdx, dst: NodeIdx, t: f64, seen: &mut Vec<bool>, best: &mut Option<f64>) {
        if at == dst {
            if best.is_none_or(|b| t < b) {
                *best = Some(t);
            }
            return;
        }
        for &e in w.net.out_edges(at) {
            let next = w.net.to_node(e);
            if seen[next.0] {
                continue;
            }
            if let Some(t2) = arrival_time(&w.net, e, t, &w.state, &w.overlay).expect("known edge") {
                seen[next.0] = true;
                dfs(w, next, dst, t2, seen, best);
                seen[next.0] = false;
            }
        }
    }
    let mut seen = vec![false; w.net.node_count()];
    seen[src.0] = true;
    let mut best = None;
    dfs(w, src, dst, t0, &mut seen, &mut best);
    best
}

/// A random walk of up to `max_len` edges from a random node.
pub fn random_path(net: &RoadNetwork, rng: &mut ChaCha8Rng, max_len: usize) -> (NodeIdx, Vec<EdgeIdx>) {
    let origin = NodeIdx(rng.random_range(0..net.node_count()));
    let mut at = origin;
    let mut edges = Vec::new();
    for _ in 0..max_len {
        let out = net.out_edges(at);
        if out.is_empty() {
            break;
        }
        let e = out[rng.random_range(0..out.len())];
        edges.push(e);
        at = net.to_node(e);
    }
    (origin, edges)
}

pub fn eta_value(t: TravelTime) -> f64 {
    t.or_inf()
}

/// S fans out to T through three parallel middle nodes; used to give
/// synthetic tasks three distinct routes.
pub fn fan_routes() -> (RoadNetwork, Vec<Route>) {
    let text = r#"{"format": "mcrts-net/1",
        "nodes": [{"id": "S"}, {"id": "M1"}, {"id": "M2"}, {"id": "M3"}, {"id": "T"}],
        "edges": [
          {"id": "s1", "from_node": "S", "to_node": "M1", "length_m": 100, "speed_limit_mps": 10},
          {"id": "s2", "from_node": "S", "to_node": "M2", "length_m": 100, "speed_limit_mps": 10},
          {"id": "s3", "from_node": "S", "to_node": "M3", "length_m": 100, "speed_limit_mps": 10},
          {"id": "t1", "from_node": "M1", "to_node": "T", "length_m": 100, "speed_limit_mps": 10},
          {"id": "t2", "from_node": "M2", "to_node": "T", "length_m": 100, "speed_limit_mps": 10},
          {"id": "t3", "from_node": "M3", "to_node": "T", "length_m": 100, "speed_limit_mps": 10}
        ]}"#;
    let net = mcrts_core::network::load_network(text).unwrap();
    let state = TrafficState::free_flow(&net);
    let routes = (1..=3)
        .map(|i| {
            let edges = vec![net.edge_idx(&format!("s{i}")).unwrap(), net.edge_idx(&format!("t{i}")).unwrap()];
            Route::evaluate(&net, net.node_idx("S").unwrap(), edges, 0.0, &state, &NetworkOverlay::new())
                .unwrap()
                .unwrap()
        })
        .collect();
    (net, routes)
}

/// Random single-task admission instance: up to 2 vehicles, up to 3
/// routes each, 5 levels.
pub fn random_task(seed: u64, routes: &[Route]) -> (MCTask, f64) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n_vehicles = rng.random_range(1..=2);
    let criticality = [Criticality::C1, Criticality::C2, Criticality::C3][rng.random_range(0..3)];
    let candidates = (0..n_vehicles)
        .map(|v| {
            let n_routes = rng.random_range(1..=3);
            let cells = (0..n_routes)
                .map(|_| {
                    // coarse values so ties happen
                    let mut eta = f64::from(rng.random_range(20..80u32)) * 10.0;
                    let mut dist = 0.0;
                    (0..5)
                        .map(|_| {
                            let blocked = rng.random_bool(0.1);
                            let cell = EtaCell {
                                eta: if blocked { TravelTime::Blocked } else { TravelTime::Finite(eta) },
                                disturbance: dist,
                            };
                            eta -= f64::from(rng.random_range(0..10u32)) * 10.0;
                            eta = eta.max(10.0);
                            dist += f64::from(rng.random_range(0..3u32)) * 50.0;
                            cell
                        })
                        .collect()
                })
                .collect();
            VehicleCandidate {
                vehicle: format!("veh{v}"),
                kind: VehicleKind::Ambulance,
                routes: routes[..n_routes].to_vec(),
                cells,
            }
        })
        .collect();
    let now = f64::from(rng.random_range(0..300u32));
    let task = MCTask {
        task_id: "task".into(),
        release_s: 0.0,
        mode: Mode::E1,
        criticality,
        deadline_s: DeadlinePolicy::default().deadline(criticality),
        wcet_margin: 1.0,
        evaluated_at_s: now,
        pickup: NodeIdx(4),
        levels: PreemptionLevel::ALL.to_vec(),
        candidates,
    };
    (task, now)
}

/// Exhaustive lexicographic choice for one task with every vehicle idle.
pub fn brute_force_admit(task: &MCTask, now: f64) -> Vec<ScheduleDecision> {
    let deadline = task.absolute_deadline_s();
    let mut all = Vec::new();
    for (v, cand) in task.candidates.iter().enumerate() {
        for r in 0..cand.routes.len() {
            for p in 0..5 {
                let cell = cand.cells[r][p];
                if let TravelTime::Finite(eta) = cell.eta {
                    all.push((p, eta, cell.disturbance, v, r));
                }
            }
        }
    }
    let key = |a: &(usize, f64, f64, usize, usize)| (a.0, a.1, a.2, a.3, a.4);
    let feasible = all.iter().filter(|c| deadline.is_none_or(|d| now + c.1 <= d)).min_by(|a, b| {
        key(a).partial_cmp(&key(b)).unwrap()
    });
    let assign = |c: &(usize, f64, f64, usize, usize)| ScheduleDecision::AssignTask {
        task: task.task_id.clone(),
        vehicle: task.candidates[c.3].vehicle.clone(),
        route: task.candidates[c.3].routes[c.4].clone(),
        p: PreemptionLevel::ALL[c.0],
    };
    if let Some(c) = feasible {
        return vec![assign(c)];
    }
    let fallback = all
        .iter()
        .filter(|c| c.0 == 4)
        .min_by(|a, b| (a.1, a.2, a.3, a.4).partial_cmp(&(b.1, b.2, b.3, b.4)).unwrap());
    match fallback {
        Some(c) => vec![
            assign(c),
            ScheduleDecision::AssignNewDeadline { task: task.task_id.clone(), new_deadline_s: now + c.1 },
        ],
        None => vec![ScheduleDecision::QueueTask { task: task.task_id.clone() }],
    }
}

/// Two-route network for halt injection: S-M is long, then M-X-T (fast)
/// or M-Y-T (detour). No edge has a reverse twin, so the detour is the
/// only finite option once an X edge is halted.
pub fn halt_scenario(seed: u64) -> (Scenario, f64, &'static str) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let sm = rng.random_range(1500.0..2500.0);
    let fast = rng.random_range(300.0..600.0);
    let detour = fast + rng.random_range(50.0..400.0);
    let halted = if rng.random_bool(0.5) { "mx" } else { "xt" };
    // halt while the vehicle is still on S-M (S-M takes sm/10 seconds)
    let halt_t = (rng.random_range(5.0..(sm / 10.0 - 5.0)) * 1000.0_f64).round() / 1000.0;
    let text = format!(
        r#"{{"format": "mcrts-scn/1",
            "network": {{"format": "mcrts-net/1",
              "nodes": [{{"id": "S"}}, {{"id": "M"}}, {{"id": "X"}}, {{"id": "Y"}}, {{"id": "T"}}],
              "edges": [
                {{"id": "sm", "from_node": "S", "to_node": "M", "length_m": {sm}, "lanes": 2, "speed_limit_mps": 10}},
                {{"id": "mx", "from_node": "M", "to_node": "X", "length_m": {fast}, "lanes": 2, "speed_limit_mps": 10}},
                {{"id": "xt", "from_node": "X", "to_node": "T", "length_m": {fast}, "lanes": 2, "speed_limit_mps": 10}},
                {{"id": "my", "from_node": "M", "to_node": "Y", "length_m": {detour}, "lanes": 2, "speed_limit_mps": 10}},
                {{"id": "yt", "from_node": "Y", "to_node": "T", "length_m": {detour}, "lanes": 2, "speed_limit_mps": 10}}
              ]}},
            "fleet": [{{"id": "amb", "kind": "ambulance", "node": "S"}}],
            "requests": [{{"id": "r1", "release_time_s": 0, "mode": "E1", "criticality": "C3", "pickup_node": "T"}}],
            "updates": [{{"time_s": {halt_t}, "deltas": [{{"edge": "{halted}", "halted": true}}]}}],
            "background": {{"step": 0.01}},
            "horizon_s": 1800}}"#
    );
    (parse_scenario(&text, None).expect("halt scenario is valid"), halt_t, halted)
}

/// Small grid scenario through the generator.
pub fn grid_scenario(n: usize, seed: u64, load: mcrts_core::harness::LoadProfile) -> Scenario {
    let doc = mcrts_core::harness::generate(n, seed, load).unwrap();
    mcrts_core::kernel::resolve(doc, None).unwrap()
}

pub fn reference_path() -> std::path::PathBuf {
    std::path::Path::new(env!("CARGO_MANIFEST_DIR")).join("scenarios/reference.json")
}

pub fn delta(edge: &str) -> EdgeDelta {
    EdgeDelta { edge: edge.into(), ..Default::default() }
}
