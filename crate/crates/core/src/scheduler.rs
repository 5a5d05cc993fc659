//! Criticality-monotonic admission and deadline-driven runtime escalation.
//!
//! Admission picks, per task, the feasible (vehicle, route, level) cell that
//! is lexicographically smallest in (level, ETA, disturbance). Monitoring
//! compares a refreshed ETA against the deadline and, on a predicted
//! overrun, first tries an alternate route at the current level and then
//! raises the level one step at a time. Levels never go down for a job.

use std::cmp::Ordering;
use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use crate::analogy::{
    Criticality, MCTask, Mode, RoutingEnv, ScheduleDecision, Vehicle, VehicleStatus,
};
use crate::network::{EdgeIdx, NodeIdx, TravelTime};
use crate::preemption::PreemptionLevel;
use crate::router::{Route, RouterError};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
#[derive(Default)]
pub struct SchedulerConfig {
    /// Idle vehicles that C0/C1 assignments must leave untouched.
    pub reserved_vehicles: usize,
    /// Queued tasks waiting longer than this get promoted one priority step.
    pub aging_after_s: Option<f64>,
}


/// Priority overrides set by `AlterPriority` decisions.
pub type PriorityOverrides = BTreeMap<String, u8>;

/// Effective priority: the override if any, else the criticality rank.
pub fn effective_priority(task_id: &str, criticality: Criticality, overrides: &PriorityOverrides) -> u8 {
    overrides.get(task_id).copied().unwrap_or(criticality.rank())
}

/// Minimal view of a task for ordering.
#[derive(Debug, Clone, PartialEq)]
pub struct PriorityKey<'a> {
    pub id: &'a str,
    pub criticality: Criticality,
    pub absolute_deadline_s: Option<f64>,
}

impl<'a> From<&'a MCTask> for PriorityKey<'a> {
    fn from(t: &'a MCTask) -> Self {
        PriorityKey { id: &t.task_id, criticality: t.criticality, absolute_deadline_s: t.absolute_deadline_s() }
    }
}

fn priority_cmp(a: &PriorityKey<'_>, b: &PriorityKey<'_>, overrides: &PriorityOverrides) -> Ordering {
    let pa = effective_priority(a.id, a.criticality, overrides);
    let pb = effective_priority(b.id, b.criticality, overrides);
    pb.cmp(&pa)
        .then_with(|| {
            let da = a.absolute_deadline_s.unwrap_or(f64::INFINITY);
            let db = b.absolute_deadline_s.unwrap_or(f64::INFINITY);
            da.total_cmp(&db)
        })
        .then_with(|| a.id.cmp(b.id))
}

/// Indices of `tasks` in service order: priority desc, absolute deadline
/// asc, id asc.
pub fn priority_order(tasks: &[PriorityKey<'_>], overrides: &PriorityOverrides) -> Vec<usize> {
    let mut idx: Vec<usize> = (0..tasks.len()).collect();
    idx.sort_by(|&i, &j| priority_cmp(&tasks[i], &tasks[j], overrides));
    idx
}

/// A chosen matrix cell.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Choice {
    pub vehicle: usize,
    pub route: usize,
    pub level: usize,
    pub eta_s: f64,
    pub feasible: bool,
}

/// Best cell of `task` among vehicles accepted by `usable`.
///
/// Feasible cells are ranked by (level, ETA, disturbance, vehicle, route).
/// Without a feasible cell, the max-level cell with the smallest
/// (ETA, disturbance, vehicle, route) is returned as infeasible.
pub fn choose_cell(task: &MCTask, now_s: f64, usable: impl Fn(&str) -> bool) -> Option<Choice> {
    let mut feasible: Option<(Choice, f64)> = None;
    let mut fallback: Option<(Choice, f64)> = None;
    let top = task.levels.len().saturating_sub(1);
    for (v, cand) in task.candidates.iter().enumerate() {
        if !usable(&cand.vehicle) {
            continue;
        }
        for r in 0..cand.routes.len() {
            for p in 0..task.levels.len() {
                let cell = task.cell(v, r, p);
                let (TravelTime::Finite(eta), TravelTime::Finite(budget)) = (cell.eta, task.budget(v, r, p)) else {
                    continue;
                };
                let choice = Choice { vehicle: v, route: r, level: p, eta_s: eta, feasible: true };
                if task.meets_deadline(now_s, budget) {
                    let better = match &feasible {
                        None => true,
                        Some((c, d)) => {
                            (p, eta, cell.disturbance).partial_cmp(&(c.level, c.eta_s, *d)) == Some(Ordering::Less)
                        }
                    };
                    if better {
                        feasible = Some((choice, cell.disturbance));
                    }
                } else if p == top {
                    let better = match &fallback {
                        None => true,
                        Some((c, d)) => (eta, cell.disturbance).partial_cmp(&(c.eta_s, *d)) == Some(Ordering::Less),
                    };
                    if better {
                        fallback = Some((Choice { feasible: false, ..choice }, cell.disturbance));
                    }
                }
            }
        }
    }
    feasible.or(fallback).map(|(c, _)| c)
}

fn uses_reserve(criticality: Criticality) -> bool {
    criticality <= Criticality::C1
}

/// One admission round.
///
/// Tasks are served in [`priority_order`]; every task gets exactly one
/// disposition: an `AssignTask` (followed by `AssignNewDeadline` when even
/// the top level cannot meet the deadline) or a `QueueTask`.
pub fn admit(
    pending: &[MCTask],
    fleet: &[Vehicle],
    now_s: f64,
    cfg: &SchedulerConfig,
    overrides: &PriorityOverrides,
) -> Vec<ScheduleDecision> {
    let keys: Vec<PriorityKey<'_>> = pending.iter().map(PriorityKey::from).collect();
    let idle: BTreeSet<&str> =
        fleet.iter().filter(|v| v.status == VehicleStatus::Idle).map(|v| v.id.as_str()).collect();
    let mut taken: BTreeSet<String> = BTreeSet::new();
    let mut out = Vec::new();

    for i in priority_order(&keys, overrides) {
        let task = &pending[i];
        let free = idle.len() - taken.len();
        let reserve_ok = !uses_reserve(task.criticality) || free > cfg.reserved_vehicles;
        let choice = if reserve_ok {
            choose_cell(task, now_s, |v| idle.contains(v) && !taken.contains(v))
        } else {
            None
        };
        match choice {
            None => out.push(ScheduleDecision::QueueTask { task: task.task_id.clone() }),
            Some(c) => {
                let cand = &task.candidates[c.vehicle];
                taken.insert(cand.vehicle.clone());
                out.push(ScheduleDecision::AssignTask {
                    task: task.task_id.clone(),
                    vehicle: cand.vehicle.clone(),
                    route: cand.routes[c.route].clone(),
                    p: task.levels[c.level],
                });
                if !c.feasible {
                    out.push(ScheduleDecision::AssignNewDeadline {
                        task: task.task_id.clone(),
                        new_deadline_s: now_s + c.eta_s,
                    });
                }
            }
        }
    }
    out
}

/// A queued task as seen by the aging rule.
#[derive(Debug, Clone, PartialEq)]
pub struct QueuedTask<'a> {
    pub id: &'a str,
    pub criticality: Criticality,
    pub release_s: f64,
}

/// `AlterPriority` for queued tasks that waited past `aging_after_s` and
/// have not been promoted yet.
pub fn aging_decisions(
    queued: &[QueuedTask<'_>],
    now_s: f64,
    cfg: &SchedulerConfig,
    overrides: &PriorityOverrides,
) -> Vec<ScheduleDecision> {
    let Some(limit) = cfg.aging_after_s else { return Vec::new() };
    queued
        .iter()
        .filter(|q| !overrides.contains_key(q.id) && now_s - q.release_s > limit)
        .map(|q| ScheduleDecision::AlterPriority { task: q.id.to_string(), new_priority: q.criticality.rank() + 1 })
        .collect()
}

/// A dispatched, not yet completed service.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ActiveService {
    pub task: String,
    pub criticality: Criticality,
    pub mode: Mode,
    pub release_s: f64,
    /// Absolute deadline currently in force; `None` is unbounded.
    pub deadline_s: Option<f64>,
    pub vehicle: String,
    pub pickup: NodeIdx,
    pub p: PreemptionLevel,
    pub max_level: PreemptionLevel,
    pub dispatch_time_s: f64,
    /// Edge being driven, with its entry time, if any.
    pub current_edge: Option<(EdgeIdx, f64)>,
    /// Node from which the remaining plan starts, and when it is reached.
    pub resume_node: NodeIdx,
    pub resume_s: f64,
    /// Edges still to enter, starting at `resume_node`.
    pub plan: Vec<EdgeIdx>,
    pub last_advised_eta_s: f64,
    pub wcet_margin: f64,
}

impl ActiveService {
    fn feasible(&self, now_s: f64, eta_s: f64) -> bool {
        self.deadline_s.is_none_or(|d| now_s + eta_s * self.wcet_margin <= d)
    }
}

/// ETA from `now_s` of following `plan` from the resume point at level `p`.
pub fn plan_eta(
    env: &RoutingEnv<'_>,
    active: &ActiveService,
    plan: &Route,
    p: PreemptionLevel,
    now_s: f64,
) -> Result<TravelTime, RouterError> {
    let (eta, _) = env.level_eta(p, plan, active.resume_s)?;
    Ok(match eta {
        TravelTime::Finite(s) => TravelTime::Finite(active.resume_s - now_s + s),
        TravelTime::Blocked => TravelTime::Blocked,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "outcome", rename_all = "snake_case")]
pub enum MonitorOutcome {
    NoAction,
    /// Alternate route at the current level.
    Reroute { plan: Route, eta_s: f64, p: PreemptionLevel, decisions: Vec<ScheduleDecision> },
    /// Level raised, possibly with a new route.
    Escalate { plan: Route, eta_s: f64, p: PreemptionLevel, decisions: Vec<ScheduleDecision> },
    /// Even the top level misses; the best plan found is kept.
    PredictedMiss { plan: Option<Route>, eta_s: Option<f64>, p: PreemptionLevel, decisions: Vec<ScheduleDecision> },
}

/// Runtime check of an active service against its deadline.
pub fn monitor(
    env: &RoutingEnv<'_>,
    active: &ActiveService,
    now_s: f64,
    refreshed_eta: TravelTime,
) -> Result<MonitorOutcome, RouterError> {
    if let TravelTime::Finite(eta) = refreshed_eta {
        if active.feasible(now_s, eta) {
            return Ok(MonitorOutcome::NoAction);
        }
    }

    let current = Route::evaluate_or_blocked(
        env.net,
        active.resume_node,
        active.plan.clone(),
        active.resume_s,
        env.state,
        env.overlay,
    )?;
    let mut best: Option<(Route, f64)> = refreshed_eta.finite().map(|e| (current.clone(), e));
    let mut best_p = active.p;

    let assign = |plan: &Route, p: PreemptionLevel| ScheduleDecision::AssignTask {
        task: active.task.clone(),
        vehicle: active.vehicle.clone(),
        route: plan.clone(),
        p,
    };
    let changed = |plan: &Route| plan.edges() != active.plan.as_slice();

    for p in PreemptionLevel::ALL.into_iter().filter(|&p| p >= active.p && p <= active.max_level) {
        // (b) carry the best plan so far up to this level
        if p > active.p {
            let plan = best.as_ref().map_or_else(|| current.clone(), |(r, _)| r.clone());
            if let TravelTime::Finite(eta) = plan_eta(env, active, &plan, p, now_s)? {
                if active.feasible(now_s, eta) {
                    let mut decisions = vec![ScheduleDecision::AssignPreemption { task: active.task.clone(), p }];
                    if changed(&plan) {
                        decisions.insert(0, assign(&plan, p));
                    }
                    return Ok(MonitorOutcome::Escalate { plan, eta_s: eta, p, decisions });
                }
                best = Some((plan, eta));
                best_p = p;
            }
        }
        // (a) alternate route at this level
        match env.fastest_at(p, active.resume_node, active.pickup, active.resume_s) {
            Ok(alt) => {
                if let TravelTime::Finite(eta) = plan_eta(env, active, &alt, p, now_s)? {
                    if active.feasible(now_s, eta) && changed(&alt) {
                        let decisions = if p == active.p {
                            vec![assign(&alt, p)]
                        } else {
                            vec![assign(&alt, p), ScheduleDecision::AssignPreemption { task: active.task.clone(), p }]
                        };
                        return Ok(if p == active.p {
                            MonitorOutcome::Reroute { plan: alt, eta_s: eta, p, decisions }
                        } else {
                            MonitorOutcome::Escalate { plan: alt, eta_s: eta, p, decisions }
                        });
                    }
                    if best_p < p || best.as_ref().is_none_or(|(_, b)| eta < *b) {
                        best = Some((alt, eta));
                        best_p = p;
                    }
                }
            }
            Err(RouterError::NoRoute { .. }) => {}
            Err(e) => return Err(e),
        }
    }

    let top = active.max_level.max(active.p);
    let mut decisions = Vec::new();
    let (plan, eta_s) = match best {
        Some((plan, eta)) => {
            if changed(&plan) {
                decisions.push(assign(&plan, top));
            }
            (Some(plan), Some(eta))
        }
        None => (None, None),
    };
    if top > active.p {
        decisions.push(ScheduleDecision::AssignPreemption { task: active.task.clone(), p: top });
    }
    if let Some(eta) = eta_s {
        decisions.push(ScheduleDecision::AssignNewDeadline { task: active.task.clone(), new_deadline_s: now_s + eta });
    }
    Ok(MonitorOutcome::PredictedMiss { plan, eta_s, p: top, decisions })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::analogy::{EtaCell, VehicleCandidate, VehicleKind, Location};
    use crate::network::{load_network, NetworkOverlay, RoadNetwork, TrafficState};
    use crate::preemption::PreemptionConfig;

    /// S to T through three parallel middle nodes.
    fn fan() -> RoadNetwork {
        load_network(
            r#"{"format": "mcrts-net/1",
                "nodes": [{"id": "S"}, {"id": "M1"}, {"id": "M2"}, {"id": "M3"}, {"id": "T"}],
                "edges": [
                  {"id": "s1", "from_node": "S", "to_node": "M1", "length_m": 100, "speed_limit_mps": 10},
                  {"id": "s2", "from_node": "S", "to_node": "M2", "length_m": 100, "speed_limit_mps": 10},
                  {"id": "s3", "from_node": "S", "to_node": "M3", "length_m": 100, "speed_limit_mps": 10},
                  {"id": "t1", "from_node": "M1", "to_node": "T", "length_m": 100, "speed_limit_mps": 10},
                  {"id": "t2", "from_node": "M2", "to_node": "T", "length_m": 100, "speed_limit_mps": 10},
                  {"id": "t3", "from_node": "M3", "to_node": "T", "length_m": 100, "speed_limit_mps": 10}
                ]}"#,
        )
        .unwrap()
    }

    fn routes(net: &RoadNetwork) -> Vec<Route> {
        let s = TrafficState::free_flow(net);
        (1..=3)
            .map(|i| {
                let edges = vec![net.edge_idx(&format!("s{i}")).unwrap(), net.edge_idx(&format!("t{i}")).unwrap()];
                Route::evaluate(net, NodeIdx(0), edges, 0.0, &s, &NetworkOverlay::new()).unwrap().unwrap()
            })
            .collect()
    }

    fn task(id: &str, c: Criticality, etas: &[&[f64]]) -> MCTask {
        let net = fan();
        let rs = routes(&net);
        let cells: Vec<Vec<EtaCell>> = etas
            .iter()
            .map(|row| row.iter().map(|&e| EtaCell { eta: TravelTime::Finite(e), disturbance: 0.0 }).collect())
            .collect();
        MCTask {
            task_id: id.into(),
            release_s: 0.0,
            mode: Mode::E1,
            criticality: c,
            deadline_s: crate::analogy::deadline_for(c, &crate::analogy::DeadlinePolicy::default()),
            wcet_margin: 1.0,
            evaluated_at_s: 0.0,
            pickup: NodeIdx(4),
            levels: PreemptionLevel::ALL.to_vec(),
            candidates: vec![VehicleCandidate {
                vehicle: "amb".into(),
                kind: VehicleKind::Ambulance,
                routes: rs[..etas.len()].to_vec(),
                cells,
            }],
        }
    }

    fn fleet() -> Vec<Vehicle> {
        vec![Vehicle { id: "amb".into(), kind: VehicleKind::Ambulance, location: Location::Node(NodeIdx(0)), status: VehicleStatus::Idle }]
    }

    #[test]
    fn feasible_at_p0() {
        let t = task("a", Criticality::C3, &[&[300.0, 290.0, 280.0, 270.0, 260.0]]);
        let d = admit(&[t], &fleet(), 0.0, &SchedulerConfig::default(), &PriorityOverrides::new());
        assert!(matches!(&d[..], [ScheduleDecision::AssignTask { p: PreemptionLevel::P0, .. }]));
    }

    #[test]
    fn escalates_to_minimal_feasible_level() {
        let t = task("a", Criticality::C3, &[&[600.0, 450.0, 400.0, 350.0, 300.0]]);
        let d = admit(&[t], &fleet(), 0.0, &SchedulerConfig::default(), &PriorityOverrides::new());
        assert!(matches!(&d[..], [ScheduleDecision::AssignTask { p: PreemptionLevel::P1, .. }]));
    }

    #[test]
    fn infeasible_gets_new_deadline() {
        let t = task("a", Criticality::C3, &[&[900.0, 800.0, 700.0, 600.0, 550.0], &[900.0, 800.0, 700.0, 600.0, 500.0]]);
        let d = admit(&[t], &fleet(), 10.0, &SchedulerConfig::default(), &PriorityOverrides::new());
        match &d[..] {
            [ScheduleDecision::AssignTask { p, route, .. }, ScheduleDecision::AssignNewDeadline { new_deadline_s, .. }] => {
                assert_eq!(*p, PreemptionLevel::P4);
                assert_eq!(route.edge_ids(&fan()), ["s2", "t2"]);
                assert_eq!(*new_deadline_s, 510.0);
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn no_vehicle_queues() {
        let t = task("a", Criticality::C3, &[&[300.0; 5]]);
        let d = admit(&[t], &[], 0.0, &SchedulerConfig::default(), &PriorityOverrides::new());
        assert_eq!(d, vec![ScheduleDecision::QueueTask { task: "a".into() }]);
    }

    #[test]
    fn reserve_blocks_low_criticality() {
        let t = task("a", Criticality::C1, &[&[300.0; 5]]);
        let cfg = SchedulerConfig { reserved_vehicles: 1, ..Default::default() };
        let d = admit(std::slice::from_ref(&t), &fleet(), 0.0, &cfg, &PriorityOverrides::new());
        assert_eq!(d, vec![ScheduleDecision::QueueTask { task: "a".into() }]);
        let mut hi = t;
        hi.criticality = Criticality::C3;
        let d = admit(&[hi], &fleet(), 0.0, &cfg, &PriorityOverrides::new());
        assert!(matches!(&d[..], [ScheduleDecision::AssignTask { .. }]));
    }

    #[test]
    fn priority_order_rules() {
        let k = |id, c, d| PriorityKey { id, criticality: c, absolute_deadline_s: d };
        let none = PriorityOverrides::new();
        let tasks = [k("x", Criticality::C1, Some(900.0)), k("y", Criticality::C3, Some(480.0))];
        assert_eq!(priority_order(&tasks, &none), vec![1, 0]);
        let tasks = [k("b", Criticality::C3, Some(480.0)), k("a", Criticality::C3, Some(480.0))];
        assert_eq!(priority_order(&tasks, &none), vec![1, 0]);
        let tasks = [k("x", Criticality::C1, Some(900.0)), k("y", Criticality::C3, Some(480.0))];
        let over = PriorityOverrides::from([("x".to_string(), 4u8)]);
        assert_eq!(priority_order(&tasks, &over), vec![0, 1]);
    }

    #[test]
    fn aging_promotes_once() {
        let q = [QueuedTask { id: "x", criticality: Criticality::C1, release_s: 0.0 }];
        let cfg = SchedulerConfig { aging_after_s: Some(100.0), ..Default::default() };
        assert!(aging_decisions(&q, 50.0, &cfg, &PriorityOverrides::new()).is_empty());
        let d = aging_decisions(&q, 150.0, &cfg, &PriorityOverrides::new());
        assert_eq!(d, vec![ScheduleDecision::AlterPriority { task: "x".into(), new_priority: 2 }]);
        let over = PriorityOverrides::from([("x".to_string(), 2u8)]);
        assert!(aging_decisions(&q, 150.0, &cfg, &over).is_empty());
    }

    /// Two S->T routes: a short one through X, a detour through Y.
    fn two_route() -> RoadNetwork {
        load_network(
            r#"{"format": "mcrts-net/1",
                "nodes": [{"id": "S"}, {"id": "X"}, {"id": "Y"}, {"id": "T"}],
                "edges": [
                  {"id": "sx", "from_node": "S", "to_node": "X", "length_m": 1000, "lanes": 2, "speed_limit_mps": 10},
                  {"id": "xt", "from_node": "X", "to_node": "T", "length_m": 1000, "lanes": 2, "speed_limit_mps": 10},
                  {"id": "sy", "from_node": "S", "to_node": "Y", "length_m": 1350, "lanes": 2, "speed_limit_mps": 10},
                  {"id": "yt", "from_node": "Y", "to_node": "T", "length_m": 1350, "lanes": 2, "speed_limit_mps": 10}
                ]}"#,
        )
        .unwrap()
    }

    fn active(net: &RoadNetwork, plan: &[&str], deadline: f64, now: f64) -> ActiveService {
        ActiveService {
            task: "t".into(),
            criticality: Criticality::C3,
            mode: Mode::E1,
            release_s: 0.0,
            deadline_s: Some(deadline),
            vehicle: "amb".into(),
            pickup: net.node_idx("T").unwrap(),
            p: PreemptionLevel::P0,
            max_level: PreemptionLevel::P4,
            dispatch_time_s: 0.0,
            current_edge: None,
            resume_node: net.node_idx("S").unwrap(),
            resume_s: now,
            plan: plan.iter().map(|id| net.edge_idx(id).unwrap()).collect(),
            last_advised_eta_s: 0.0,
            wcet_margin: 1.0,
        }
    }

    #[test]
    fn monitor_no_action_when_on_time() {
        let net = two_route();
        let s = TrafficState::free_flow(&net);
        let ov = NetworkOverlay::new();
        let pre = PreemptionConfig::default();
        let env = RoutingEnv { net: &net, state: &s, overlay: &ov, preemption: &pre };
        let a = active(&net, &["sx", "xt"], 480.0, 200.0);
        assert_eq!(monitor(&env, &a, 200.0, TravelTime::Finite(250.0)).unwrap(), MonitorOutcome::NoAction);
    }

    #[test]
    fn monitor_reroutes_before_escalating() {
        // xt congested to c=0.5: 100 * 2 = 200 s, so S-X-T takes 300 s; detour 270 s.
        let net = two_route();
        let s = crate::network::apply_update(
            &net,
            &TrafficState::free_flow(&net),
            &[crate::network::EdgeDelta { edge: "xt".into(), congestion: Some(0.5), ..Default::default() }],
            200.0,
        )
        .unwrap();
        let ov = NetworkOverlay::new();
        let pre = PreemptionConfig::default();
        let env = RoutingEnv { net: &net, state: &s, overlay: &ov, preemption: &pre };
        let a = active(&net, &["sx", "xt"], 480.0, 200.0);
        match monitor(&env, &a, 200.0, TravelTime::Finite(300.0)).unwrap() {
            MonitorOutcome::Reroute { plan, eta_s, p, decisions } => {
                assert_eq!(plan.edge_ids(&net), ["sy", "yt"]);
                assert_eq!(eta_s, 270.0);
                assert_eq!(p, PreemptionLevel::P0);
                assert!(matches!(&decisions[..], [ScheduleDecision::AssignTask { .. }]));
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn monitor_escalates_when_no_route_helps() {
        // both routes congested; P2 lane reservation removes it
        let net = two_route();
        let c = |id: &str| crate::network::EdgeDelta { edge: id.into(), congestion: Some(0.7), ..Default::default() };
        let s = crate::network::apply_update(&net, &TrafficState::free_flow(&net), &[c("sx"), c("xt"), c("sy"), c("yt")], 0.0)
            .unwrap();
        let ov = NetworkOverlay::new();
        let pre = PreemptionConfig::default();
        let env = RoutingEnv { net: &net, state: &s, overlay: &ov, preemption: &pre };
        let a = active(&net, &["sx", "xt"], 480.0, 0.0);
        match monitor(&env, &a, 0.0, TravelTime::Finite(592.0)).unwrap() {
            MonitorOutcome::Escalate { p, eta_s, decisions, .. } => {
                assert_eq!(p, PreemptionLevel::P2);
                assert_eq!(eta_s, 200.0);
                assert_eq!(decisions, vec![ScheduleDecision::AssignPreemption { task: "t".into(), p: PreemptionLevel::P2 }]);
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn monitor_predicts_miss() {
        let net = two_route();
        let s = TrafficState::free_flow(&net);
        let ov = NetworkOverlay::new();
        let pre = PreemptionConfig::default();
        let env = RoutingEnv { net: &net, state: &s, overlay: &ov, preemption: &pre };
        let a = active(&net, &["sx", "xt"], 480.0, 400.0);
        match monitor(&env, &a, 400.0, TravelTime::Finite(200.0)).unwrap() {
            MonitorOutcome::PredictedMiss { p, eta_s, decisions, .. } => {
                assert_eq!(p, PreemptionLevel::P4);
                let eta = eta_s.unwrap();
                assert!(400.0 + eta > 480.0);
                assert!(matches!(decisions.last(), Some(ScheduleDecision::AssignNewDeadline { new_deadline_s, .. }) if *new_deadline_s == 400.0 + eta));
            }
            other => panic!("unexpected {other:?}"),
        }
    }
}
