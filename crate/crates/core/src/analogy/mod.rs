//! Mapping between the traffic domain and the mixed-criticality task model.
//!
//! Forward: an [`EmergencyRequest`] becomes an [`MCTask`] whose ETA matrix
//! over (vehicle, route, pre-emption level) is the execution budget the
//! scheduler works with. Inverse: each [`ScheduleDecision`] the scheduler
//! emits is turned back into [`TrafficCommand`]s.

mod policy;

use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::network::{traversal_time, EdgeIdx, NetworkError, NetworkOverlay, NodeIdx, RoadNetwork, TrafficState, TravelTime};
use crate::preemption::{self, envelope, PreemptionConfig, PreemptionLevel};
use crate::router::{fastest_route, k_routes, path_eta, Route, RouterError};

pub use policy::{deadline_for, DeadlinePolicy, Target, ORANGE_DEADLINE_S, PRESETS};

/// Service mode: E0 normal AV trip, E1 emergency (AEV) mode.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Mode {
    E0,
    E1,
}

/// C3/C2 are life threatening (purple/red), C1 less so (orange), C0 none.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Criticality {
    C0,
    C1,
    C2,
    C3,
}

impl Criticality {
    pub const ALL: [Criticality; 4] = [Criticality::C0, Criticality::C1, Criticality::C2, Criticality::C3];

    pub fn rank(self) -> u8 {
        self as u8
    }

    /// Purple/red classes, the ones with contractual targets by default.
    pub fn is_life_threatening(self) -> bool {
        self >= Criticality::C2
    }
}

impl fmt::Display for Criticality {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "C{}", self.rank())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum VehicleKind {
    NormalAv,
    Ambulance,
    Fire,
    Police,
}

impl VehicleKind {
    pub fn is_specialized(self) -> bool {
        self != VehicleKind::NormalAv
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum VehicleStatus {
    Idle,
    EnRoute,
    Serving,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Location {
    Node(NodeIdx),
    /// Part-way along an edge; `offset` is the fraction already driven.
    OnEdge { edge: EdgeIdx, offset: f64 },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Vehicle {
    pub id: String,
    pub kind: VehicleKind,
    pub location: Location,
    pub status: VehicleStatus,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EmergencyRequest {
    pub id: String,
    pub release_time_s: f64,
    pub mode: Mode,
    pub criticality: Criticality,
    pub pickup_node: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub destination_node: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub requested_vehicle_kind: Option<VehicleKind>,
}

impl EmergencyRequest {
    /// E0 implies C0 and C1+ implies E1.
    pub fn check_mode(&self) -> Result<(), AnalogyError> {
        match (self.mode, self.criticality) {
            (Mode::E0, c) if c != Criticality::C0 => Err(AnalogyError::InconsistentMode(self.id.clone())),
            (Mode::E1, _) | (Mode::E0, _) => Ok(()),
        }
    }

    /// Normal-mode trips and C0 requests never get pre-emption.
    pub fn max_level(&self, configured: PreemptionLevel) -> PreemptionLevel {
        if self.mode == Mode::E0 || self.criticality == Criticality::C0 {
            PreemptionLevel::P0
        } else {
            configured
        }
    }

    /// Whether `kind` may serve this request.
    pub fn accepts(&self, kind: VehicleKind) -> bool {
        match self.criticality {
            Criticality::C0 => kind == self.requested_vehicle_kind.unwrap_or(VehicleKind::NormalAv),
            Criticality::C1 => {
                kind == VehicleKind::NormalAv || self.requested_vehicle_kind.map_or(kind.is_specialized(), |k| k == kind)
            }
            Criticality::C2 | Criticality::C3 => {
                kind.is_specialized() && self.requested_vehicle_kind.is_none_or(|k| k == kind)
            }
        }
    }
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum AnalogyError {
    #[error("request {0}: E0 requests must have criticality C0")]
    InconsistentMode(String),
    #[error("no idle vehicle of a compatible kind for request {0}")]
    NoCandidateVehicle(String),
    #[error("no finite route to the pickup of request {0}")]
    NoRoute(String),
    #[error(transparent)]
    Network(#[from] NetworkError),
    #[error(transparent)]
    Router(RouterError),
}

impl From<RouterError> for AnalogyError {
    fn from(e: RouterError) -> Self {
        match e {
            RouterError::Network(n) => AnalogyError::Network(n),
            other => AnalogyError::Router(other),
        }
    }
}

/// Knobs for building task budgets.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TaskConfig {
    /// Routes per vehicle from the penalty generator (before level routes).
    pub k_routes: usize,
    /// Budget = ETA * margin. 1.0 adopts the ETA as-is.
    pub wcet_margin: f64,
    /// Highest level the ladder may reach.
    pub max_level: PreemptionLevel,
}

impl Default for TaskConfig {
    fn default() -> Self {
        Self { k_routes: 3, wcet_margin: 1.0, max_level: PreemptionLevel::P4 }
    }
}

/// Read-only view of the world used by routing and budget computation.
#[derive(Debug, Clone, Copy)]
pub struct RoutingEnv<'a> {
    pub net: &'a RoadNetwork,
    pub state: &'a TrafficState,
    /// Overlay already in force for the vehicle being routed.
    pub overlay: &'a NetworkOverlay,
    pub preemption: &'a PreemptionConfig,
}

impl RoutingEnv<'_> {
    /// Combined overlay for running `route` at `p` from `t_s`, with its cost.
    pub fn level_overlay(
        &self,
        p: PreemptionLevel,
        route: &Route,
        t_s: f64,
    ) -> Result<(NetworkOverlay, preemption::DisturbanceCost), NetworkError> {
        let (granted, cost) = preemption::apply(p, route, self.net, self.state, t_s, self.preemption)?;
        let mut ov = self.overlay.clone();
        ov.absorb(&granted);
        Ok((ov, cost))
    }

    /// ETA of `route` at level `p` departing `t_s`, plus level disturbance.
    pub fn level_eta(&self, p: PreemptionLevel, route: &Route, t_s: f64) -> Result<(TravelTime, f64), RouterError> {
        let (ov, cost) = self.level_overlay(p, route, t_s)?;
        Ok((path_eta(self.net, route.origin(), route.edges(), t_s, self.state, &ov)?, cost.total()))
    }

    /// Fastest route available at level `p`.
    pub fn fastest_at(&self, p: PreemptionLevel, src: NodeIdx, dst: NodeIdx, t_s: f64) -> Result<Route, RouterError> {
        let mut ov = self.overlay.clone();
        ov.absorb(&envelope(p, self.net, self.state, self.preemption));
        let found = fastest_route(self.net, self.state, &ov, src, dst, t_s)?;
        // re-time under the base overlay so entry times describe P0
        Ok(Route::evaluate(self.net, src, found.edges().to_vec(), t_s, self.state, self.overlay)?.unwrap_or(found))
    }
}

/// One cell of the ETA matrix.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EtaCell {
    /// Seconds from task evaluation time to pickup arrival.
    pub eta: TravelTime,
    /// Disturbance the level would impose along this route.
    pub disturbance: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VehicleCandidate {
    pub vehicle: String,
    pub kind: VehicleKind,
    pub routes: Vec<Route>,
    /// `cells[route][level]`.
    pub cells: Vec<Vec<EtaCell>>,
}

/// The task image of a request.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MCTask {
    pub task_id: String,
    pub release_s: f64,
    pub mode: Mode,
    pub criticality: Criticality,
    /// Relative deadline from the policy; `None` is unbounded.
    pub deadline_s: Option<f64>,
    pub wcet_margin: f64,
    /// Time the matrix was evaluated at.
    pub evaluated_at_s: f64,
    pub pickup: NodeIdx,
    pub levels: Vec<PreemptionLevel>,
    pub candidates: Vec<VehicleCandidate>,
}

impl MCTask {
    pub fn absolute_deadline_s(&self) -> Option<f64> {
        self.deadline_s.map(|d| self.release_s + d)
    }

    pub fn max_level(&self) -> PreemptionLevel {
        *self.levels.last().unwrap_or(&PreemptionLevel::P0)
    }

    pub fn cell(&self, v: usize, r: usize, p: usize) -> EtaCell {
        self.candidates[v].cells[r][p]
    }

    /// Execution budget of a cell: ETA scaled by the margin.
    pub fn budget(&self, v: usize, r: usize, p: usize) -> TravelTime {
        match self.cell(v, r, p).eta {
            TravelTime::Finite(s) => TravelTime::Finite(s * self.wcet_margin),
            TravelTime::Blocked => TravelTime::Blocked,
        }
    }

    /// (vehicles, max routes per vehicle, levels)
    pub fn shape(&self) -> (usize, usize, usize) {
        let routes = self.candidates.iter().map(|c| c.routes.len()).max().unwrap_or(0);
        (self.candidates.len(), routes, self.levels.len())
    }

    /// Whether a finish at `now_s + budget` meets the deadline.
    pub fn meets_deadline(&self, now_s: f64, budget_s: f64) -> bool {
        self.absolute_deadline_s().is_none_or(|d| now_s + budget_s <= d)
    }
}

/// Where a vehicle can start a new route, and when.
pub fn vehicle_origin(
    vehicle: &Vehicle,
    env: &RoutingEnv<'_>,
    now_s: f64,
) -> Result<Option<(NodeIdx, f64)>, NetworkError> {
    match vehicle.location {
        Location::Node(n) => Ok(Some((n, now_s))),
        Location::OnEdge { edge, offset } => {
            let full = traversal_time(env.net, edge, now_s, env.state, env.overlay)?;
            Ok(full.finite().map(|tt| (env.net.to_node(edge), now_s + (1.0 - offset.clamp(0.0, 1.0)) * tt)))
        }
    }
}

/// Builds the task image of `request` at `now_s`.
///
/// Candidate vehicles are the idle ones of a compatible kind. For each,
/// the route set is the `k_routes` alternatives at P0 plus the fastest route
/// at every higher level of the ladder (when not already present); every
/// route is then evaluated at every level.
pub fn to_task(
    request: &EmergencyRequest,
    fleet: &[Vehicle],
    env: &RoutingEnv<'_>,
    policy: &DeadlinePolicy,
    cfg: &TaskConfig,
    now_s: f64,
) -> Result<MCTask, AnalogyError> {
    request.check_mode()?;
    let pickup = env.net.node_idx(&request.pickup_node)?;
    if let Some(dst) = &request.destination_node {
        env.net.node_idx(dst)?;
    }
    let max_level = request.max_level(cfg.max_level);
    let levels: Vec<PreemptionLevel> = max_level.up_to().collect();

    let eligible: Vec<&Vehicle> =
        fleet.iter().filter(|v| v.status == VehicleStatus::Idle && request.accepts(v.kind)).collect();
    if eligible.is_empty() {
        return Err(AnalogyError::NoCandidateVehicle(request.id.clone()));
    }

    let mut candidates = Vec::with_capacity(eligible.len());
    for v in eligible {
        let Some((origin, depart)) = vehicle_origin(v, env, now_s)? else { continue };
        let mut routes = match k_routes(env.net, env.state, env.overlay, origin, pickup, depart, cfg.k_routes.max(1)) {
            Ok(rs) => rs,
            Err(RouterError::NoRoute { .. }) => Vec::new(),
            Err(e) => return Err(e.into()),
        };
        for &p in levels.iter().skip(1) {
            match env.fastest_at(p, origin, pickup, depart) {
                Ok(r) => {
                    if !routes.iter().any(|x| x.same_path(&r)) {
                        routes.push(r);
                    }
                }
                Err(RouterError::NoRoute { .. }) => {}
                Err(e) => return Err(e.into()),
            }
        }
        if routes.is_empty() {
            continue;
        }
        let lead = depart - now_s;
        let mut cells = Vec::with_capacity(routes.len());
        for r in &routes {
            let mut row = Vec::with_capacity(levels.len());
            for &p in &levels {
                let (eta, disturbance) = env.level_eta(p, r, depart)?;
                let eta = match eta {
                    TravelTime::Finite(s) => TravelTime::Finite(lead + s),
                    TravelTime::Blocked => TravelTime::Blocked,
                };
                row.push(EtaCell { eta, disturbance });
            }
            cells.push(row);
        }
        candidates.push(VehicleCandidate { vehicle: v.id.clone(), kind: v.kind, routes, cells });
    }

    let any_finite = candidates.iter().flat_map(|c| c.cells.iter().flatten()).any(|cell| !cell.eta.is_blocked());
    if !any_finite {
        return Err(AnalogyError::NoRoute(request.id.clone()));
    }

    Ok(MCTask {
        task_id: request.id.clone(),
        release_s: request.release_time_s,
        mode: request.mode,
        criticality: request.criticality,
        deadline_s: deadline_for(request.criticality, policy),
        wcet_margin: cfg.wcet_margin,
        evaluated_at_s: now_s,
        pickup,
        levels,
        candidates,
    })
}

/// Scheduler outputs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "decision", rename_all = "snake_case")]
pub enum ScheduleDecision {
    /// Assigning task to processor: a (vehicle, route, level) triple.
    AssignTask { task: String, vehicle: String, route: Route, p: PreemptionLevel },
    AssignNewDeadline { task: String, new_deadline_s: f64 },
    QueueTask { task: String },
    AlterPriority { task: String, new_priority: u8 },
    AssignPreemption { task: String, p: PreemptionLevel },
}

impl ScheduleDecision {
    pub fn task(&self) -> &str {
        match self {
            ScheduleDecision::AssignTask { task, .. }
            | ScheduleDecision::AssignNewDeadline { task, .. }
            | ScheduleDecision::QueueTask { task }
            | ScheduleDecision::AlterPriority { task, .. }
            | ScheduleDecision::AssignPreemption { task, .. } => task,
        }
    }
}

/// Traffic-domain actions.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "command", rename_all = "snake_case")]
pub enum TrafficCommand {
    DispatchVehicle { vehicle: String, route: Route },
    ExtendTarget { request: String, new_deadline_s: f64 },
    HoldRequest { request: String },
    Reprioritize { request: String, priority: u8 },
    /// `action` names the effect the level adds (e.g. "lane reservation").
    ActivatePreemption { request: String, p: PreemptionLevel, action: String },
}

/// Inverse mapping. Total; the first command is the primary image of the
/// decision, and an assignment above P0 also activates pre-emption.
pub fn from_decision(decision: &ScheduleDecision) -> Vec<TrafficCommand> {
    let activate = |task: &str, p: PreemptionLevel| TrafficCommand::ActivatePreemption {
        request: task.to_string(),
        p,
        action: p.action().to_string(),
    };
    match decision {
        ScheduleDecision::AssignTask { task, vehicle, route, p } => {
            let mut out = vec![TrafficCommand::DispatchVehicle { vehicle: vehicle.clone(), route: route.clone() }];
            if *p > PreemptionLevel::P0 {
                out.push(activate(task, *p));
            }
            out
        }
        ScheduleDecision::AssignNewDeadline { task, new_deadline_s } => {
            vec![TrafficCommand::ExtendTarget { request: task.clone(), new_deadline_s: *new_deadline_s }]
        }
        ScheduleDecision::QueueTask { task } => vec![TrafficCommand::HoldRequest { request: task.clone() }],
        ScheduleDecision::AlterPriority { task, new_priority } => {
            vec![TrafficCommand::Reprioritize { request: task.clone(), priority: *new_priority }]
        }
        ScheduleDecision::AssignPreemption { task, p } => vec![activate(task, *p)],
    }
}
