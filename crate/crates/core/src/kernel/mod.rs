//! Deterministic discrete-event simulation of the dispatch loop.
//!
//! The clock is integer milliseconds. Pending events are ordered by
//! (time, kind rank, insertion sequence), so a run is a pure function of
//! (scenario, seed, variant).

mod scenario;
mod trace;

use std::cmp::Reverse;
use std::collections::{BTreeMap, BTreeSet, BinaryHeap};

use serde_json::{json, Value};
use sha2::{Digest, Sha256};
use thiserror::Error;

pub use scenario::{
    load_scenario, parse_scenario, resolve, BackgroundModel, FleetEntry, NetworkSource, PolicySource, Scenario,
    ScenarioDocument, ScenarioError, ScriptedUpdate, Variant, SCENARIO_FORMAT,
};
pub use trace::{outcomes_from_log, response_time, EventKind, Outcome, Response, Trace, TraceError, TraceRecord};

use crate::analogy::{
    from_decision, to_task, AnalogyError, Location, RoutingEnv, ScheduleDecision, TaskConfig, Vehicle, VehicleKind,
    VehicleStatus,
};
use crate::network::{
    apply_update, traversal_time, EdgeIdx, EdgeTraffic, NetworkError, NetworkOverlay, NodeIdx, TrafficState,
    TravelTime,
};
use crate::preemption::{self, DisturbanceKind, PreemptionLevel};
use crate::router::{fastest_route, Route, RouterError};
use crate::scheduler::{admit, aging_decisions, monitor, plan_eta, ActiveService, MonitorOutcome, QueuedTask};

#[derive(Debug, Error)]
pub enum KernelError {
    #[error(transparent)]
    Network(#[from] NetworkError),
    #[error(transparent)]
    Router(#[from] RouterError),
    #[error(transparent)]
    Analogy(#[from] AnalogyError),
}

fn to_ms(s: f64) -> i64 {
    (s * 1000.0).round() as i64
}

fn to_s(ms: i64) -> f64 {
    ms as f64 / 1000.0
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
enum Pending {
    Expiry { service: usize, edge: EdgeIdx },
    Scripted(usize),
    Tick(u64),
    Exit(usize),
    Release(usize),
    Arrival(usize),
    Horizon,
}

impl Pending {
    fn rank(self) -> u8 {
        match self {
            Pending::Expiry { .. } => 0,
            Pending::Scripted(_) => 1,
            Pending::Tick(_) => 2,
            Pending::Exit(_) => 3,
            Pending::Release(_) => 4,
            Pending::Arrival(_) => 5,
            Pending::Horizon => 9,
        }
    }
}

#[derive(Debug, Clone)]
struct Unit {
    id: String,
    kind: VehicleKind,
    node: NodeIdx,
    status: VehicleStatus,
    /// (edge, entry ms, exit ms)
    edge: Option<(EdgeIdx, i64, i64)>,
    service: Option<usize>,
    waiting: bool,
    release_node: NodeIdx,
}

#[derive(Debug, Clone)]
struct Service {
    request: usize,
    unit: usize,
    active: ActiveService,
    overlay: NetworkOverlay,
    scheduled_expiry: BTreeMap<EdgeIdx, i64>,
    charged: BTreeSet<(DisturbanceKind, String)>,
    done: bool,
}

/// Uniform draw in `[-1, 1)` keyed by (seed, edge id, tick).
fn walk_draw(seed: u64, edge: &str, tick: u64) -> f64 {
    let mut h = Sha256::new();
    h.update(seed.to_le_bytes());
    h.update(edge.as_bytes());
    h.update([0u8]);
    h.update(tick.to_le_bytes());
    let d = h.finalize();
    let x = u64::from_le_bytes(d[..8].try_into().expect("8 bytes"));
    (x >> 11) as f64 / (1u64 << 53) as f64 * 2.0 - 1.0
}

fn reflect(mut c: f64) -> f64 {
    if c < 0.0 {
        c = -c;
    }
    if c > 1.0 {
        c = 2.0 - c;
    }
    c.clamp(0.0, 1.0)
}

struct Sim<'a> {
    sc: &'a Scenario,
    seed: u64,
    variant: Variant,
    task_cfg: TaskConfig,
    now_ms: i64,
    horizon_ms: i64,
    tick_ms: i64,
    state: TrafficState,
    queue: BinaryHeap<Reverse<(i64, u8, u64, Pending)>>,
    seq: u64,
    records: Vec<TraceRecord>,
    units: Vec<Unit>,
    services: Vec<Service>,
    pending: Vec<usize>,
    queued: BTreeSet<usize>,
    overrides: BTreeMap<String, u8>,
    completed: Vec<bool>,
    empty: NetworkOverlay,
}

/// Runs `scenario` to its horizon.
pub fn run(scenario: &Scenario, seed: u64, variant: Variant) -> Result<Trace, KernelError> {
    let doc = &scenario.document;
    let mut task_cfg = doc.task.clone();
    if variant == Variant::NoPreemption {
        task_cfg.max_level = PreemptionLevel::P0;
    }
    let units = doc
        .fleet
        .iter()
        .zip(&scenario.fleet_nodes)
        .map(|(f, &n)| Unit {
            id: f.id.clone(),
            kind: f.kind,
            node: n,
            status: VehicleStatus::Idle,
            edge: None,
            service: None,
            waiting: false,
            release_node: n,
        })
        .collect();
    let mut sim = Sim {
        sc: scenario,
        seed,
        variant,
        task_cfg,
        now_ms: 0,
        horizon_ms: to_ms(doc.horizon_s),
        tick_ms: to_ms(doc.tick_s).max(1),
        state: scenario.initial.clone(),
        queue: BinaryHeap::new(),
        seq: 0,
        records: Vec::new(),
        units,
        services: Vec::new(),
        pending: Vec::new(),
        queued: BTreeSet::new(),
        overrides: BTreeMap::new(),
        completed: vec![false; doc.requests.len()],
        empty: NetworkOverlay::new(),
    };

    for (i, r) in doc.requests.iter().enumerate() {
        let t = to_ms(r.release_time_s);
        if t <= sim.horizon_ms {
            sim.schedule(t, Pending::Arrival(i));
        }
    }
    for (i, u) in doc.updates.iter().enumerate() {
        let t = to_ms(u.time_s);
        if t <= sim.horizon_ms {
            sim.schedule(t, Pending::Scripted(i));
        }
    }
    if sim.tick_ms <= sim.horizon_ms {
        sim.schedule(sim.tick_ms, Pending::Tick(1));
    }
    sim.schedule(sim.horizon_ms, Pending::Horizon);

    while let Some(Reverse((t, _, _, ev))) = sim.queue.pop() {
        debug_assert!(t >= sim.now_ms);
        sim.now_ms = t;
        match ev {
            Pending::Arrival(r) => sim.on_arrival(r)?,
            Pending::Scripted(i) => sim.on_scripted(i)?,
            Pending::Tick(k) => sim.on_tick(k)?,
            Pending::Exit(u) => sim.on_exit(u)?,
            Pending::Release(u) => sim.on_release(u)?,
            Pending::Expiry { service, edge } => sim.on_expiry(service, edge),
            Pending::Horizon => {
                sim.on_horizon();
                break;
            }
        }
    }

    let config_digest = {
        let mut h = Sha256::new();
        h.update(scenario.canonical_json().as_bytes());
        h.update(b"\n");
        h.update(variant.as_str().as_bytes());
        hex::encode(h.finalize())
    };
    let outcomes = outcomes_from_log(&sim.records);
    Ok(Trace { seed, variant, config_digest, horizon_s: doc.horizon_s, records: sim.records, outcomes })
}

impl<'a> Sim<'a> {
    fn now_s(&self) -> f64 {
        to_s(self.now_ms)
    }

    fn schedule(&mut self, t_ms: i64, ev: Pending) {
        debug_assert!(t_ms >= self.now_ms, "event scheduled in the past");
        self.queue.push(Reverse((t_ms.max(self.now_ms), ev.rank(), self.seq, ev)));
        self.seq += 1;
    }

    fn log(&mut self, kind: EventKind, data: Value) {
        let Value::Object(data) = data else { unreachable!("payloads are objects") };
        self.records.push(TraceRecord { seq: self.records.len() as u64, t_ms: self.now_ms, kind, data });
    }

    fn edge_id(&self, e: EdgeIdx) -> &'a str {
        &self.sc.net.edge(e).id
    }

    fn route_ids(&self, edges: &[EdgeIdx]) -> Vec<&'a str> {
        edges.iter().map(|&e| self.edge_id(e)).collect()
    }

    fn relative_deadline(&self, r: usize) -> Option<f64> {
        self.sc.policy.deadline(self.sc.document.requests[r].criticality)
    }

    fn request_summary(&self, r: usize) -> Value {
        let req = &self.sc.document.requests[r];
        json!({
            "request": req.id,
            "criticality": req.criticality,
            "mode": req.mode,
            "release_s": req.release_time_s,
            "deadline_s": self.relative_deadline(r),
            "pickup": req.pickup_node,
        })
    }

    fn fleet_view(&self) -> Vec<Vehicle> {
        self.units
            .iter()
            .map(|u| Vehicle {
                id: u.id.clone(),
                kind: u.kind,
                location: match u.edge {
                    Some((e, entry, exit)) => Location::OnEdge {
                        edge: e,
                        offset: if exit > entry { (self.now_ms - entry) as f64 / (exit - entry) as f64 } else { 1.0 },
                    },
                    None => Location::Node(u.node),
                },
                status: u.status,
            })
            .collect()
    }

    fn on_arrival(&mut self, r: usize) -> Result<(), KernelError> {
        let data = self.request_summary(r);
        self.log(EventKind::RequestArrival, data);
        self.pending.push(r);
        self.admission()
    }

    fn mark_queued(&mut self, r: usize, reason: &str) {
        if self.queued.insert(r) {
            let id = self.sc.document.requests[r].id.clone();
            self.log(EventKind::Queued, json!({"request": id, "reason": reason}));
        }
    }

    fn admission(&mut self) -> Result<(), KernelError> {
        if self.pending.is_empty() {
            return Ok(());
        }
        let sc = self.sc;
        let now_s = self.now_s();
        let requests = &sc.document.requests;

        let waiting: Vec<QueuedTask<'_>> = self
            .pending
            .iter()
            .filter(|r| self.queued.contains(r))
            .map(|&r| QueuedTask {
                id: &requests[r].id,
                criticality: requests[r].criticality,
                release_s: requests[r].release_time_s,
            })
            .collect();
        let aging = aging_decisions(&waiting, now_s, &sc.document.scheduler, &self.overrides);
        for d in aging {
            if let ScheduleDecision::AlterPriority { task, new_priority } = d {
                self.overrides.insert(task.clone(), new_priority);
                self.log(EventKind::PriorityAltered, json!({"request": task, "priority": new_priority}));
            }
        }

        let fleet = self.fleet_view();
        let mut tasks = Vec::new();
        let mut unplaceable = Vec::new();
        {
            let env = RoutingEnv {
                net: &sc.net,
                state: &self.state,
                overlay: &self.empty,
                preemption: &sc.document.preemption,
            };
            for &r in &self.pending {
                match to_task(&requests[r], &fleet, &env, &sc.policy, &self.task_cfg, now_s) {
                    Ok(t) => tasks.push(t),
                    Err(AnalogyError::NoCandidateVehicle(_)) => unplaceable.push((r, "no idle compatible vehicle")),
                    Err(AnalogyError::NoRoute(_)) => unplaceable.push((r, "no route to pickup")),
                    Err(e) => return Err(e.into()),
                }
            }
        }
        for (r, reason) in unplaceable {
            self.mark_queued(r, reason);
        }
        if tasks.is_empty() {
            return Ok(());
        }

        let decisions = admit(&tasks, &fleet, now_s, &sc.document.scheduler, &self.overrides);
        let index: BTreeMap<&str, usize> = requests.iter().enumerate().map(|(i, r)| (r.id.as_str(), i)).collect();
        let mut i = 0;
        while i < decisions.len() {
            let r = index[decisions[i].task()];
            let d = &decisions[i];
            match d {
                ScheduleDecision::AssignTask { vehicle, route, p, .. } => {
                    let mut commands = from_decision(d);
                    let mut extension = None;
                    if let Some(next @ ScheduleDecision::AssignNewDeadline { task, new_deadline_s }) = decisions.get(i + 1) {
                        if task == &requests[r].id {
                            commands.extend(from_decision(next));
                            extension = Some(*new_deadline_s);
                            i += 1;
                        }
                    }
                    let tags: Vec<Value> =
                        commands.iter().map(|c| serde_json::to_value(c).expect("command")["command"].clone()).collect();
                    self.dispatch(r, vehicle, route, *p, extension, tags)?;
                }
                ScheduleDecision::QueueTask { .. } => self.mark_queued(r, "no vehicle left this round"),
                _ => {}
            }
            i += 1;
        }
        Ok(())
    }

    fn dispatch(
        &mut self,
        r: usize,
        vehicle: &str,
        route: &Route,
        p: PreemptionLevel,
        new_deadline: Option<f64>,
        commands: Vec<Value>,
    ) -> Result<(), KernelError> {
        let sc = self.sc;
        let req = &sc.document.requests[r];
        let u = self.units.iter().position(|x| x.id == vehicle).expect("assigned vehicle exists");
        let now_s = self.now_s();
        let absolute = self.relative_deadline(r).map(|d| req.release_time_s + d);
        let active = ActiveService {
            task: req.id.clone(),
            criticality: req.criticality,
            mode: req.mode,
            release_s: req.release_time_s,
            deadline_s: new_deadline.or(absolute),
            vehicle: vehicle.to_string(),
            pickup: sc.net.node_idx(&req.pickup_node)?,
            p,
            max_level: req.max_level(self.task_cfg.max_level),
            dispatch_time_s: now_s,
            current_edge: None,
            resume_node: self.units[u].node,
            resume_s: now_s,
            plan: route.edges().to_vec(),
            last_advised_eta_s: 0.0,
            wcet_margin: self.task_cfg.wcet_margin,
        };
        let s = self.services.len();
        self.services.push(Service {
            request: r,
            unit: u,
            active,
            overlay: NetworkOverlay::new(),
            scheduled_expiry: BTreeMap::new(),
            charged: BTreeSet::new(),
            done: false,
        });
        self.units[u].status = VehicleStatus::EnRoute;
        self.units[u].service = Some(s);
        self.units[u].release_node = match &req.destination_node {
            Some(d) => sc.net.node_idx(d)?,
            None => self.services[s].active.pickup,
        };
        self.pending.retain(|&x| x != r);

        let charged = self.refresh_overlay(s)?;
        let eta = self.advised_eta(s)?;
        self.services[s].active.last_advised_eta_s = eta.unwrap_or(f64::INFINITY);
        self.log(
            EventKind::Dispatch,
            json!({
                "request": req.id,
                "vehicle": vehicle,
                "route": self.route_ids(route.edges()),
                "p": p,
                "eta_s": eta,
                "deadline_s": absolute,
                "new_deadline_s": new_deadline,
                "charged_veh_s": charged,
                "commands": commands,
            }),
        );
        self.advance(u)
    }

    /// ETA of service `s` from now along its plan at its level.
    fn advised_eta(&self, s: usize) -> Result<Option<f64>, KernelError> {
        let a = &self.services[s].active;
        let env = self.env();
        let route = Route::evaluate_or_blocked(&self.sc.net, a.resume_node, a.plan.clone(), a.resume_s, &self.state, &self.empty)?;
        Ok(plan_eta(&env, a, &route, a.p, self.now_s())?.finite())
    }

    fn env(&self) -> RoutingEnv<'_> {
        RoutingEnv { net: &self.sc.net, state: &self.state, overlay: &self.empty, preemption: &self.sc.document.preemption }
    }

    /// Re-grants the level overlay for the remaining plan under the current
    /// snapshot. Returns the newly charged disturbance.
    fn refresh_overlay(&mut self, s: usize) -> Result<f64, KernelError> {
        let sc = self.sc;
        let now_s = self.now_s();
        let a = &self.services[s].active;
        let route = Route::evaluate_or_blocked(&sc.net, a.resume_node, a.plan.clone(), a.resume_s, &self.state, &self.empty)?;
        let (granted, cost) = preemption::apply(a.p, &route, &sc.net, &self.state, a.resume_s, &sc.document.preemption)?;

        let svc = &mut self.services[s];
        let mut charged = 0.0;
        for item in cost.items {
            if svc.charged.insert((item.kind, item.element)) {
                charged += item.vehicle_seconds;
            }
        }
        let mut overlay = granted;
        for (e, flags) in svc.overlay.edges() {
            if overlay.get(e).is_none() {
                if let Some(t) = svc.overlay.expiry(e).filter(|&t| t > now_s) {
                    overlay.set(e, *flags);
                    overlay.set_expiry(e, t);
                }
            }
        }
        svc.overlay = overlay;

        let mut to_schedule = Vec::new();
        for ev in preemption::release(&svc.overlay, now_s) {
            let t = to_ms(ev.time_s);
            if svc.scheduled_expiry.get(&ev.edge) != Some(&t) {
                svc.scheduled_expiry.insert(ev.edge, t);
                to_schedule.push((t, ev.edge));
            }
        }
        let stale: Vec<EdgeIdx> =
            svc.scheduled_expiry.keys().copied().filter(|e| svc.overlay.get(*e).is_none()).collect();
        for e in stale {
            svc.scheduled_expiry.remove(&e);
        }
        for (t, edge) in to_schedule {
            self.schedule(t, Pending::Expiry { service: s, edge });
        }
        Ok(charged)
    }

    fn on_expiry(&mut self, s: usize, e: EdgeIdx) {
        let svc = &mut self.services[s];
        if svc.scheduled_expiry.get(&e) != Some(&self.now_ms) {
            return;
        }
        svc.scheduled_expiry.remove(&e);
        svc.overlay.remove(e);
        let id = self.sc.document.requests[svc.request].id.clone();
        self.log(EventKind::OverlayExpiry, json!({"request": id, "edge": self.edge_id(e)}));
    }

    /// Moves a vehicle standing at a node: completes the service at the
    /// pickup or enters the next planned edge.
    fn advance(&mut self, u: usize) -> Result<(), KernelError> {
        let Some(s) = self.units[u].service else { return Ok(()) };
        if self.services[s].done || self.units[u].edge.is_some() {
            return Ok(());
        }
        let sc = self.sc;
        let node = self.units[u].node;
        if node == self.services[s].active.pickup {
            return self.complete(s);
        }
        let now_s = self.now_s();
        let req_id = sc.document.requests[self.services[s].request].id.clone();
        let Some(&e) = self.services[s].active.plan.first() else {
            self.units[u].waiting = true;
            self.log(EventKind::EntryBlocked, json!({"request": req_id, "vehicle": self.units[u].id, "edge": null}));
            return Ok(());
        };
        match traversal_time(&sc.net, e, now_s, &self.state, &self.services[s].overlay)? {
            TravelTime::Blocked => {
                self.units[u].waiting = true;
                self.log(
                    EventKind::EntryBlocked,
                    json!({"request": req_id, "vehicle": self.units[u].id, "edge": self.edge_id(e)}),
                );
            }
            TravelTime::Finite(tt) => {
                let exit_ms = self.now_ms + to_ms(tt);
                self.log(
                    EventKind::EdgeEntered,
                    json!({
                        "request": req_id,
                        "vehicle": self.units[u].id,
                        "edge": self.edge_id(e),
                        "tt_s": tt,
                        "exit_ms": exit_ms,
                    }),
                );
                let unit = &mut self.units[u];
                unit.edge = Some((e, self.now_ms, exit_ms));
                unit.waiting = false;
                let a = &mut self.services[s].active;
                a.current_edge = Some((e, now_s));
                a.resume_node = sc.net.to_node(e);
                a.resume_s = to_s(exit_ms);
                a.plan.remove(0);
                self.schedule(exit_ms, Pending::Exit(u));
            }
        }
        Ok(())
    }

    fn on_exit(&mut self, u: usize) -> Result<(), KernelError> {
        let Some((e, _, _)) = self.units[u].edge.take() else { return Ok(()) };
        let node = self.sc.net.to_node(e);
        self.units[u].node = node;
        let s = self.units[u].service.expect("driving vehicles serve a request");
        let now_s = self.now_s();
        let a = &mut self.services[s].active;
        a.current_edge = None;
        a.resume_node = node;
        a.resume_s = now_s;
        let req_id = self.sc.document.requests[self.services[s].request].id.clone();
        self.log(EventKind::EdgeExited, json!({"request": req_id, "vehicle": self.units[u].id, "edge": self.edge_id(e)}));
        self.advance(u)
    }

    fn complete(&mut self, s: usize) -> Result<(), KernelError> {
        let sc = self.sc;
        let r = self.services[s].request;
        let u = self.services[s].unit;
        let req = &sc.document.requests[r];
        let response = self.now_s() - req.release_time_s;
        let deadline = self.relative_deadline(r);
        self.services[s].done = true;
        self.completed[r] = true;
        self.units[u].status = VehicleStatus::Serving;
        self.log(
            EventKind::ServiceCompleted,
            json!({
                "request": req.id,
                "vehicle": self.units[u].id,
                "release_s": req.release_time_s,
                "response_time_s": response,
                "deadline_s": deadline,
                "met": deadline.is_none_or(|d| response <= d),
                "p": self.services[s].active.p,
            }),
        );
        let mut hold = sc.document.service_time_s;
        let pickup = self.services[s].active.pickup;
        let dest = self.units[u].release_node;
        if dest != pickup {
            match fastest_route(&sc.net, &self.state, &self.empty, pickup, dest, self.now_s() + hold) {
                Ok(route) => hold += route.total_eta_s(),
                Err(RouterError::NoRoute { .. }) => self.units[u].release_node = pickup,
                Err(e) => return Err(e.into()),
            }
        }
        self.schedule(self.now_ms + to_ms(hold), Pending::Release(u));
        Ok(())
    }

    fn on_release(&mut self, u: usize) -> Result<(), KernelError> {
        let unit = &mut self.units[u];
        unit.status = VehicleStatus::Idle;
        unit.service = None;
        unit.waiting = false;
        unit.node = unit.release_node;
        let node = self.sc.net.node(unit.node).id.clone();
        let id = unit.id.clone();
        self.log(EventKind::VehicleReleased, json!({"vehicle": id, "node": node}));
        self.admission()
    }

    fn on_scripted(&mut self, i: usize) -> Result<(), KernelError> {
        let update = &self.sc.document.updates[i];
        self.state = apply_update(&self.sc.net, &self.state, &update.deltas, self.now_s())?;
        let edges: Vec<&str> = update.deltas.iter().map(|d| d.edge.as_str()).collect();
        self.log(EventKind::StateUpdate, json!({"source": "script", "index": i, "edges": edges}));
        self.after_update()
    }

    fn on_tick(&mut self, k: u64) -> Result<(), KernelError> {
        let sc = self.sc;
        if let Some(bg) = &sc.document.background {
            let records: Vec<EdgeTraffic> = self
                .state
                .records()
                .iter()
                .enumerate()
                .map(|(i, rec)| {
                    let base = sc.initial.records()[i].congestion;
                    let draw = walk_draw(self.seed, &sc.net.edges()[i].id, k);
                    let c = rec.congestion + bg.reversion * (base - rec.congestion) + bg.step * draw;
                    EdgeTraffic { congestion: reflect(c), ..*rec }
                })
                .collect();
            self.state = TrafficState::from_records(&sc.net, records, self.now_s())?;
        }
        self.log(EventKind::StateUpdate, json!({"source": "tick", "tick": k}));
        self.after_update()?;
        let next = self.now_ms + self.tick_ms;
        if next <= self.horizon_ms {
            self.schedule(next, Pending::Tick(k + 1));
        }
        Ok(())
    }

    fn after_update(&mut self) -> Result<(), KernelError> {
        if self.variant != Variant::StaticRoute {
            for s in 0..self.services.len() {
                if !self.services[s].done {
                    self.reevaluate(s)?;
                }
            }
        }
        for u in 0..self.units.len() {
            if self.units[u].waiting {
                self.advance(u)?;
            }
        }
        self.admission()
    }

    fn reevaluate(&mut self, s: usize) -> Result<(), KernelError> {
        let sc = self.sc;
        let now_s = self.now_s();
        let a = self.services[s].active.clone();
        let (refreshed, outcome) = {
            let env = self.env();
            let route = Route::evaluate_or_blocked(&sc.net, a.resume_node, a.plan.clone(), a.resume_s, &self.state, &self.empty)?;
            let refreshed = plan_eta(&env, &a, &route, a.p, now_s)?;
            let outcome = monitor(&env, &a, now_s, refreshed)?;
            (refreshed, outcome)
        };
        let base = json!({
            "request": a.task,
            "vehicle": a.vehicle,
            "eta_s": refreshed.finite(),
            "deadline_s": a.deadline_s,
            "p": a.p,
        });
        let mut reeval = base.as_object().expect("object").clone();

        match outcome {
            MonitorOutcome::NoAction => {
                let charged = self.refresh_overlay(s)?;
                reeval.insert("outcome".into(), json!("no_action"));
                reeval.insert("charged_veh_s".into(), json!(charged));
                self.log(EventKind::Reevaluation, Value::Object(reeval));
                self.services[s].active.last_advised_eta_s = refreshed.or_inf();
            }
            MonitorOutcome::Reroute { plan, eta_s, p, .. } => {
                reeval.insert("outcome".into(), json!("reroute"));
                self.log(EventKind::Reevaluation, Value::Object(reeval));
                self.services[s].active.plan = plan.edges().to_vec();
                let charged = self.refresh_overlay(s)?;
                self.services[s].active.last_advised_eta_s = eta_s;
                self.log(
                    EventKind::Rerouted,
                    json!({
                        "request": a.task,
                        "vehicle": a.vehicle,
                        "route": self.route_ids(plan.edges()),
                        "eta_s": eta_s,
                        "p": p,
                        "charged_veh_s": charged,
                    }),
                );
            }
            MonitorOutcome::Escalate { plan, eta_s, p, .. } => {
                reeval.insert("outcome".into(), json!("escalate"));
                self.log(EventKind::Reevaluation, Value::Object(reeval));
                let svc = &mut self.services[s];
                svc.active.plan = plan.edges().to_vec();
                svc.active.p = p;
                svc.active.last_advised_eta_s = eta_s;
                let charged = self.refresh_overlay(s)?;
                self.log(
                    EventKind::EscalationApplied,
                    json!({
                        "request": a.task,
                        "vehicle": a.vehicle,
                        "from": a.p,
                        "to": p,
                        "route": self.route_ids(plan.edges()),
                        "eta_s": eta_s,
                        "charged_veh_s": charged,
                    }),
                );
            }
            MonitorOutcome::PredictedMiss { plan, eta_s, p, .. } => {
                reeval.insert("outcome".into(), json!("predicted_miss"));
                self.log(EventKind::Reevaluation, Value::Object(reeval));
                let svc = &mut self.services[s];
                if let Some(plan) = &plan {
                    svc.active.plan = plan.edges().to_vec();
                }
                svc.active.p = p;
                let new_deadline = eta_s.map(|e| now_s + e);
                if let Some(d) = new_deadline {
                    svc.active.deadline_s = Some(d);
                    svc.active.last_advised_eta_s = eta_s.unwrap_or(f64::INFINITY);
                }
                let charged = self.refresh_overlay(s)?;
                let route = self.route_ids(&self.services[s].active.plan);
                if p > a.p {
                    self.log(
                        EventKind::EscalationApplied,
                        json!({
                            "request": a.task,
                            "vehicle": a.vehicle,
                            "from": a.p,
                            "to": p,
                            "route": route,
                            "eta_s": eta_s,
                            "charged_veh_s": charged,
                        }),
                    );
                }
                self.log(
                    EventKind::PredictedMiss,
                    json!({
                        "request": a.task,
                        "vehicle": a.vehicle,
                        "p": p,
                        "eta_s": eta_s,
                        "new_deadline_s": new_deadline,
                        "charged_veh_s": if p > a.p { 0.0 } else { charged },
                    }),
                );
            }
        }
        Ok(())
    }

    fn on_horizon(&mut self) {
        for r in 0..self.sc.document.requests.len() {
            if !self.completed[r] {
                let mut data = self.request_summary(r);
                let dispatched = self.services.iter().any(|s| s.request == r);
                data["dispatched"] = json!(dispatched);
                self.log(EventKind::HorizonExceeded, data);
            }
        }
    }
}
