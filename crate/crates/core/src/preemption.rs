//! The cumulative pre-emption ladder P0..P4.
//!
//! | level | adds                                                     |
//! |-------|----------------------------------------------------------|
//! | P0    | nothing                                                  |
//! | P1    | green wave: forced green at signalized downstream nodes  |
//! | P2    | lane reservation on multi-lane route edges               |
//! | P3    | speed-limit raise (`speed_cap_factor`)                   |
//! | P4    | reverse lane on halted/saturated edges with a twin       |
//!
//! Every effect is a function of the edge alone, so the overlay a level
//! grants to a route is the level's network-wide envelope restricted to the
//! route's edges.

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::network::{arrival_time, EdgeIdx, EdgeOverlay, NetworkError, NetworkOverlay, RoadNetwork, TrafficState};
use crate::router::Route;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum PreemptionLevel {
    P0,
    P1,
    P2,
    P3,
    P4,
}

impl PreemptionLevel {
    pub const ALL: [PreemptionLevel; 5] =
        [PreemptionLevel::P0, PreemptionLevel::P1, PreemptionLevel::P2, PreemptionLevel::P3, PreemptionLevel::P4];
    pub const MAX: PreemptionLevel = PreemptionLevel::P4;

    pub fn ordinal(self) -> usize {
        self as usize
    }

    pub fn from_ordinal(p: usize) -> Option<Self> {
        Self::ALL.get(p).copied()
    }

    pub fn next(self) -> Option<Self> {
        Self::from_ordinal(self.ordinal() + 1)
    }

    /// Levels `P0..=self`.
    pub fn up_to(self) -> impl Iterator<Item = PreemptionLevel> {
        Self::ALL.into_iter().take(self.ordinal() + 1)
    }

    /// The action this level adds on top of the previous one.
    pub fn action(self) -> &'static str {
        match self {
            PreemptionLevel::P0 => "none",
            PreemptionLevel::P1 => "green wave",
            PreemptionLevel::P2 => "lane reservation",
            PreemptionLevel::P3 => "speed limit raise",
            PreemptionLevel::P4 => "reverse lane",
        }
    }
}

impl fmt::Display for PreemptionLevel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "P{}", self.ordinal())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PreemptionConfig {
    pub speed_cap_factor: f64,
    pub recovery_time_s: f64,
    /// Share of an edge's queue delayed by a lane reservation.
    pub lane_reservation_coeff: f64,
    /// Reverse-lane cost as a multiple of the twin's reservation cost.
    pub reverse_lane_multiplier: f64,
    /// Congestion at or above which an edge counts as saturated for P4.
    pub saturation_threshold: f64,
}

impl Default for PreemptionConfig {
    fn default() -> Self {
        Self {
            speed_cap_factor: 1.2,
            recovery_time_s: 60.0,
            lane_reservation_coeff: 0.5,
            reverse_lane_multiplier: 2.0,
            saturation_threshold: 0.8,
        }
    }
}

impl PreemptionConfig {
    pub fn validate(&self) -> Result<(), String> {
        if !(self.speed_cap_factor >= 1.0 && self.speed_cap_factor.is_finite()) {
            return Err("speed_cap_factor must be >= 1".into());
        }
        if !(self.recovery_time_s >= 0.0 && self.recovery_time_s.is_finite()) {
            return Err("recovery_time_s must be >= 0".into());
        }
        if !(self.lane_reservation_coeff >= 0.0 && self.reverse_lane_multiplier >= 0.0) {
            return Err("cost coefficients must be >= 0".into());
        }
        if !(0.0..=1.0).contains(&self.saturation_threshold) {
            return Err("saturation_threshold must lie in [0, 1]".into());
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DisturbanceKind {
    GreenWave,
    LaneReservation,
    SpeedCap,
    ReverseLane,
}

/// Delay imposed on background traffic at one node or edge.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DisturbanceItem {
    pub kind: DisturbanceKind,
    /// Node id for green waves, edge id otherwise.
    pub element: String,
    pub vehicle_seconds: f64,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct DisturbanceCost {
    pub items: Vec<DisturbanceItem>,
}

impl DisturbanceCost {
    pub fn total(&self) -> f64 {
        self.items.iter().map(|i| i.vehicle_seconds).fold(0.0, |a, b| a + b)
    }
}

/// Flags level `p` grants on edge `e`, independent of any route.
pub fn level_flags(
    p: PreemptionLevel,
    net: &RoadNetwork,
    state: &TrafficState,
    e: EdgeIdx,
    cfg: &PreemptionConfig,
) -> EdgeOverlay {
    let mut f = EdgeOverlay::default();
    if p >= PreemptionLevel::P1 && net.downstream_signal(e).is_some() {
        f.forced_green = true;
    }
    if p >= PreemptionLevel::P2 && net.edge(e).lanes >= 2 {
        f.reserved_lane = true;
    }
    if p >= PreemptionLevel::P3 {
        f.speed_cap_factor = cfg.speed_cap_factor;
    }
    if p >= PreemptionLevel::P4 && net.reverse_twin(e).is_some() {
        let rec = state.edge(e);
        if rec.halted || rec.congestion >= cfg.saturation_threshold {
            f.reverse_enabled = true;
        }
    }
    f
}

/// Level `p` applied to every edge. Searching under the envelope finds the
/// fastest route available at that level.
pub fn envelope(p: PreemptionLevel, net: &RoadNetwork, state: &TrafficState, cfg: &PreemptionConfig) -> NetworkOverlay {
    let mut ov = NetworkOverlay::new();
    if p == PreemptionLevel::P0 {
        return ov;
    }
    for i in 0..net.edge_count() {
        let e = EdgeIdx(i);
        ov.set(e, level_flags(p, net, state, e, cfg));
    }
    ov
}

fn reservation_cost(net: &RoadNetwork, state: &TrafficState, e: EdgeIdx, cfg: &PreemptionConfig) -> f64 {
    f64::from(state.edge(e).queued_vehicles) * net.edge(e).free_flow_s() * cfg.lane_reservation_coeff
}

/// Disturbance of granting `flags` on route edge `e`.
fn edge_disturbance(
    net: &RoadNetwork,
    state: &TrafficState,
    e: EdgeIdx,
    flags: &EdgeOverlay,
    cfg: &PreemptionConfig,
    out: &mut Vec<DisturbanceItem>,
) {
    if flags.forced_green {
        if let Some(plan) = net.downstream_signal(e) {
            let node = net.to_node(e);
            let cross_queue: u32 = net
                .in_edges(node)
                .iter()
                .filter(|&&x| x != e)
                .map(|&x| state.edge(x).queued_vehicles)
                .sum();
            out.push(DisturbanceItem {
                kind: DisturbanceKind::GreenWave,
                element: net.node(node).id.clone(),
                vehicle_seconds: f64::from(cross_queue) * plan.red_len(),
            });
        }
    }
    if flags.reserved_lane {
        out.push(DisturbanceItem {
            kind: DisturbanceKind::LaneReservation,
            element: net.edge(e).id.clone(),
            vehicle_seconds: reservation_cost(net, state, e, cfg),
        });
    }
    if flags.speed_cap_factor > 1.0 {
        out.push(DisturbanceItem {
            kind: DisturbanceKind::SpeedCap,
            element: net.edge(e).id.clone(),
            vehicle_seconds: 0.0,
        });
    }
    if flags.reverse_enabled {
        if let Some(twin) = net.reverse_twin(e) {
            out.push(DisturbanceItem {
                kind: DisturbanceKind::ReverseLane,
                element: net.edge(twin).id.clone(),
                vehicle_seconds: cfg.reverse_lane_multiplier * reservation_cost(net, state, twin, cfg),
            });
        }
    }
}

/// Overlay and background-traffic cost of running `route` at level `p`
/// from `t_s`. Each overlaid edge expires `recovery_time_s` after the EV
/// leaves it. Inapplicable effects contribute nothing.
pub fn apply(
    p: PreemptionLevel,
    route: &Route,
    net: &RoadNetwork,
    state: &TrafficState,
    t_s: f64,
    cfg: &PreemptionConfig,
) -> Result<(NetworkOverlay, DisturbanceCost), NetworkError> {
    let mut overlay = NetworkOverlay::new();
    let mut cost = DisturbanceCost::default();
    if p == PreemptionLevel::P0 {
        return Ok((overlay, cost));
    }
    for &e in route.edges() {
        net.check_edge(e)?;
        let flags = level_flags(p, net, state, e, cfg);
        edge_disturbance(net, state, e, &flags, cfg, &mut cost.items);
        overlay.set(e, flags);
    }
    // Exit times under the new overlay; past a blocked edge the remaining
    // edges inherit the last known time.
    let mut t = t_s;
    let mut blocked = false;
    for &e in route.edges() {
        if !blocked {
            match arrival_time(net, e, t, state, &overlay)? {
                Some(exit) => t = exit,
                None => blocked = true,
            }
        }
        overlay.set_expiry(e, t + cfg.recovery_time_s);
    }
    Ok((overlay, cost))
}

/// Expiry of one overlaid edge.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RecoveryEvent {
    pub time_s: f64,
    pub edge: EdgeIdx,
}

/// One recovery event per overlaid edge, sorted by time, never before `t_s`.
pub fn release(overlay: &NetworkOverlay, t_s: f64) -> Vec<RecoveryEvent> {
    let mut events: Vec<RecoveryEvent> = overlay
        .edges()
        .map(|(e, _)| RecoveryEvent { time_s: overlay.expiry(e).unwrap_or(t_s).max(t_s), edge: e })
        .collect();
    events.sort_by(|a, b| a.time_s.total_cmp(&b.time_s).then(a.edge.cmp(&b.edge)));
    events
}
