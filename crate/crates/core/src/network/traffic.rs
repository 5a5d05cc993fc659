use serde::{Deserialize, Serialize};

use super::{EdgeIdx, NetworkError, RoadNetwork};

/// Dynamic conditions on one edge.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EdgeTraffic {
    /// Congestion level in `[0, 1]`.
    pub congestion: f64,
    /// Pedestrians per minute crossing at the downstream end.
    pub pedestrian_flow: f64,
    pub queued_vehicles: u32,
    /// Closed to normal traffic (incident, works, halt on road).
    pub halted: bool,
}

impl Default for EdgeTraffic {
    fn default() -> Self {
        Self { congestion: 0.0, pedestrian_flow: 0.0, queued_vehicles: 0, halted: false }
    }
}

/// Immutable traffic snapshot. Updates produce a new value.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrafficState {
    edges: Vec<EdgeTraffic>,
    snapshot_time_s: f64,
}

impl TrafficState {
    /// Free-flow snapshot at time zero.
    pub fn free_flow(net: &RoadNetwork) -> Self {
        Self { edges: vec![EdgeTraffic::default(); net.edge_count()], snapshot_time_s: 0.0 }
    }

    /// Builds a snapshot from explicit records, validating every value.
    pub fn from_records(
        net: &RoadNetwork,
        edges: Vec<EdgeTraffic>,
        snapshot_time_s: f64,
    ) -> Result<Self, NetworkError> {
        if edges.len() != net.edge_count() {
            return Err(NetworkError::InvalidField {
                path: "edges".into(),
                reason: format!("expected {} records, found {}", net.edge_count(), edges.len()),
            });
        }
        for (i, rec) in edges.iter().enumerate() {
            check_congestion(rec.congestion, &format!("edges[{i}].congestion"))?;
            check_pedestrians(rec.pedestrian_flow, &format!("edges[{i}].pedestrian_flow"))?;
        }
        Ok(Self { edges, snapshot_time_s })
    }

    pub fn snapshot_time_s(&self) -> f64 {
        self.snapshot_time_s
    }

    pub fn edge(&self, e: EdgeIdx) -> &EdgeTraffic {
        &self.edges[e.0]
    }

    pub fn records(&self) -> &[EdgeTraffic] {
        &self.edges
    }

    pub fn len(&self) -> usize {
        self.edges.len()
    }

    pub fn is_empty(&self) -> bool {
        self.edges.is_empty()
    }
}

/// Per-edge change set applied by [`apply_update`]. Absent fields are kept.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EdgeDelta {
    pub edge: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub congestion: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub pedestrian_flow: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub queued_vehicles: Option<i64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub halted: Option<bool>,
}

fn check_congestion(c: f64, path: &str) -> Result<(), NetworkError> {
    if (0.0..=1.0).contains(&c) {
        Ok(())
    } else {
        Err(NetworkError::OutOfRangeValue { path: path.into(), reason: format!("congestion {c} outside [0, 1]") })
    }
}

fn check_pedestrians(p: f64, path: &str) -> Result<(), NetworkError> {
    if p.is_finite() && p >= 0.0 {
        Ok(())
    } else {
        Err(NetworkError::OutOfRangeValue { path: path.into(), reason: format!("pedestrian flow {p} is negative") })
    }
}

/// Returns a new snapshot at `t_s` with `delta` applied. Out-of-range values
/// are rejected rather than clamped.
pub fn apply_update(
    net: &RoadNetwork,
    state: &TrafficState,
    delta: &[EdgeDelta],
    t_s: f64,
) -> Result<TrafficState, NetworkError> {
    if !(t_s >= state.snapshot_time_s) {
        return Err(NetworkError::TimeRegression { snapshot_s: state.snapshot_time_s, update_s: t_s });
    }
    let mut edges = state.edges.clone();
    for (i, d) in delta.iter().enumerate() {
        let e = net.edge_idx(&d.edge)?;
        let rec = &mut edges[e.0];
        if let Some(c) = d.congestion {
            check_congestion(c, &format!("delta[{i}].congestion"))?;
            rec.congestion = c;
        }
        if let Some(p) = d.pedestrian_flow {
            check_pedestrians(p, &format!("delta[{i}].pedestrian_flow"))?;
            rec.pedestrian_flow = p;
        }
        if let Some(q) = d.queued_vehicles {
            rec.queued_vehicles = u32::try_from(q).map_err(|_| NetworkError::OutOfRangeValue {
                path: format!("delta[{i}].queued_vehicles"),
                reason: format!("queue length {q} is not a non-negative count"),
            })?;
        }
        if let Some(h) = d.halted {
            rec.halted = h;
        }
    }
    Ok(TrafficState { edges, snapshot_time_s: t_s })
}
