//! Edge traversal time: drive + queue + signal + pedestrian components.
//!
//! ```text
//! t_drive  = L / (v * slope * cap) * (1 + ALPHA * c^2)
//! t_queue  = QUEUE_HEADWAY_S * q                      (0 with a reserved lane)
//! t_signal = wait for next green at stop-line arrival (0 under forced green)
//! t_ped    = min(PED_DELAY_CAP_S, PED_DELAY_PER_PED_S * ped)   (0 under forced green)
//! ```
//!
//! Inside one snapshot only `t_signal` depends on the entry time, and
//! `t + wait(t)` is non-decreasing, so exit time is FIFO in entry time.

use serde::{Deserialize, Serialize};

use super::{EdgeIdx, NetworkError, NetworkOverlay, RoadNetwork, TrafficState};

pub const CONGESTION_ALPHA: f64 = 4.0;
pub const QUEUE_HEADWAY_S: f64 = 2.0;
pub const PED_DELAY_PER_PED_S: f64 = 0.05;
pub const PED_DELAY_CAP_S: f64 = 10.0;

/// Traversal outcome: finite seconds, or impassable.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TravelTime {
    Finite(f64),
    Blocked,
}

impl TravelTime {
    pub fn finite(self) -> Option<f64> {
        match self {
            TravelTime::Finite(s) => Some(s),
            TravelTime::Blocked => None,
        }
    }

    pub fn is_blocked(self) -> bool {
        matches!(self, TravelTime::Blocked)
    }

    /// Seconds, with `Blocked` mapped to +inf. Handy for comparisons.
    pub fn or_inf(self) -> f64 {
        self.finite().unwrap_or(f64::INFINITY)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Breakdown {
    pub drive_s: f64,
    pub queue_s: f64,
    pub signal_s: f64,
    pub ped_s: f64,
}

impl Breakdown {
    pub fn total(&self) -> f64 {
        self.drive_s + self.queue_s + self.signal_s + self.ped_s
    }
}

/// Component breakdown, or `None` if the edge is blocked.
pub fn traversal_breakdown(
    net: &RoadNetwork,
    edge: EdgeIdx,
    t_enter_s: f64,
    state: &TrafficState,
    overlay: &NetworkOverlay,
) -> Result<Option<Breakdown>, NetworkError> {
    Ok(edge_pass(net, edge, t_enter_s, state, overlay, 1.0)?.map(|p| p.breakdown))
}

/// Seconds needed to traverse `edge` when entering at `t_enter_s`.
pub fn traversal_time(
    net: &RoadNetwork,
    edge: EdgeIdx,
    t_enter_s: f64,
    state: &TrafficState,
    overlay: &NetworkOverlay,
) -> Result<TravelTime, NetworkError> {
    Ok(match edge_pass(net, edge, t_enter_s, state, overlay, 1.0)? {
        Some(p) => TravelTime::Finite(p.exit_s - t_enter_s),
        None => TravelTime::Blocked,
    })
}

/// Exit time for an entry at `t_enter_s`, or `None` if blocked. Route
/// folding goes through this function so that every step is a composition
/// of monotone float operations.
pub fn arrival_time(
    net: &RoadNetwork,
    edge: EdgeIdx,
    t_enter_s: f64,
    state: &TrafficState,
    overlay: &NetworkOverlay,
) -> Result<Option<f64>, NetworkError> {
    Ok(edge_pass(net, edge, t_enter_s, state, overlay, 1.0)?.map(|p| p.exit_s))
}

pub(crate) struct EdgePass {
    pub breakdown: Breakdown,
    pub exit_s: f64,
}

/// Core evaluation. `scale` multiplies the time-independent components and
/// is used for route penalties; signal waiting is still evaluated at the
/// (scaled) stop-line arrival, which keeps FIFO.
pub(crate) fn edge_pass(
    net: &RoadNetwork,
    edge: EdgeIdx,
    t_enter_s: f64,
    state: &TrafficState,
    overlay: &NetworkOverlay,
    scale: f64,
) -> Result<Option<EdgePass>, NetworkError> {
    net.check_edge(edge)?;
    let e = net.edge(edge);
    let rec = state.edge(edge);
    let flags = overlay.flags(edge);

    let twin_congestion = net.reverse_twin(edge).map(|t| state.edge(t).congestion);
    let reserved = flags.reserved_lane && e.lanes >= 2;
    let reversed = flags.reverse_enabled && twin_congestion.is_some();
    let mut congestion = rec.congestion;
    if reserved {
        congestion = 0.0;
    }
    if rec.halted {
        match (flags.reverse_enabled, twin_congestion) {
            (true, Some(tc)) => congestion = tc,
            _ => return Ok(None),
        }
    } else if flags.reverse_enabled {
        if let Some(tc) = twin_congestion {
            congestion = congestion.min(tc);
        }
    }

    let v_eff = e.speed_limit_mps * e.slope_factor * flags.speed_cap_factor;
    let drive_s = e.length_m / v_eff * (1.0 + CONGESTION_ALPHA * congestion * congestion) * scale;
    let queue_s = if flags.reserved_lane || reversed {
        0.0
    } else {
        QUEUE_HEADWAY_S * f64::from(rec.queued_vehicles) * scale
    };

    let signal = net.downstream_signal(edge);
    let forced = flags.forced_green && signal.is_some();
    let stop_line = t_enter_s + (drive_s + queue_s);
    let depart = match signal {
        Some(plan) if !forced => plan.next_green(stop_line),
        _ => stop_line,
    };
    let ped_s = if forced {
        0.0
    } else {
        (PED_DELAY_PER_PED_S * rec.pedestrian_flow).min(PED_DELAY_CAP_S) * scale
    };

    Ok(Some(EdgePass {
        breakdown: Breakdown { drive_s, queue_s, signal_s: depart - stop_line, ped_s },
        exit_s: depart + ped_s,
    }))
}
