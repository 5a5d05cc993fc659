use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::analogy::{DeadlinePolicy, EmergencyRequest, TaskConfig, VehicleKind};
use crate::network::{apply_update, EdgeDelta, NetworkDocument, NodeIdx, RoadNetwork, TrafficState};
use crate::preemption::PreemptionConfig;
use crate::scheduler::SchedulerConfig;

pub const SCENARIO_FORMAT: &str = "mcrts-scn/1";

#[derive(Debug, Error)]
pub enum ScenarioError {
    #[error("invalid scenario at {path}: {reason}")]
    Invalid { path: String, reason: String },
    #[error("cannot read {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

impl ScenarioError {
    fn invalid(path: impl Into<String>, reason: impl fmt::Display) -> Self {
        ScenarioError::Invalid { path: path.into(), reason: reason.to_string() }
    }
}

/// Network given by file path (relative to the scenario) or inline.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum NetworkSource {
    Path(String),
    Inline(NetworkDocument),
}

/// Preset key or an explicit policy.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum PolicySource {
    Preset(String),
    Custom(DeadlinePolicy),
}

impl Default for PolicySource {
    fn default() -> Self {
        PolicySource::Preset("nz".into())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FleetEntry {
    pub id: String,
    pub kind: VehicleKind,
    pub node: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScriptedUpdate {
    pub time_s: f64,
    pub deltas: Vec<EdgeDelta>,
}

/// Per-edge congestion random walk sampled at every tick.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BackgroundModel {
    /// Largest per-tick congestion change.
    pub step: f64,
    /// Pull towards the initial congestion per tick, in `[0, 1]`.
    #[serde(default)]
    pub reversion: f64,
}

fn default_tick() -> f64 {
    10.0
}

fn default_service_time() -> f64 {
    600.0
}

/// On-disk scenario.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioDocument {
    pub format: String,
    pub network: NetworkSource,
    pub fleet: Vec<FleetEntry>,
    #[serde(default)]
    pub requests: Vec<EmergencyRequest>,
    /// Conditions at time zero on top of free flow.
    #[serde(default)]
    pub initial_state: Vec<EdgeDelta>,
    #[serde(default)]
    pub updates: Vec<ScriptedUpdate>,
    #[serde(default)]
    pub background: Option<BackgroundModel>,
    #[serde(default)]
    pub policy: PolicySource,
    #[serde(default)]
    pub preemption: PreemptionConfig,
    #[serde(default)]
    pub task: TaskConfig,
    #[serde(default)]
    pub scheduler: SchedulerConfig,
    /// On-scene time before a vehicle is free again (plus the drive to the
    /// destination when the request names one).
    #[serde(default = "default_service_time")]
    pub service_time_s: f64,
    pub horizon_s: f64,
    #[serde(default = "default_tick")]
    pub tick_s: f64,
}

/// A validated, resolved scenario.
#[derive(Debug, Clone)]
pub struct Scenario {
    pub document: ScenarioDocument,
    pub net: RoadNetwork,
    pub initial: TrafficState,
    pub policy: DeadlinePolicy,
    pub fleet_nodes: Vec<NodeIdx>,
}

/// Scheduler variants compared by the harness.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Variant {
    Mcrts,
    /// Ladder truncated to P0.
    NoPreemption,
    /// Route fixed at dispatch, no monitoring.
    StaticRoute,
}

impl Variant {
    pub const ALL: [Variant; 3] = [Variant::Mcrts, Variant::NoPreemption, Variant::StaticRoute];

    pub fn as_str(self) -> &'static str {
        match self {
            Variant::Mcrts => "mcrts",
            Variant::NoPreemption => "no_preemption",
            Variant::StaticRoute => "static_route",
        }
    }
}

impl fmt::Display for Variant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Variant {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Variant::ALL
            .into_iter()
            .find(|v| v.as_str() == s)
            .ok_or_else(|| format!("unknown variant `{s}` (expected mcrts, no_preemption or static_route)"))
    }
}

/// Reads and validates a scenario file.
pub fn load_scenario(path: &Path) -> Result<Scenario, ScenarioError> {
    let text = std::fs::read_to_string(path)
        .map_err(|source| ScenarioError::Io { path: path.display().to_string(), source })?;
    parse_scenario(&text, path.parent())
}

/// Parses scenario text; relative network paths resolve against `base_dir`.
pub fn parse_scenario(text: &str, base_dir: Option<&Path>) -> Result<Scenario, ScenarioError> {
    let de = &mut serde_json::Deserializer::from_str(text);
    let doc: ScenarioDocument = serde_path_to_error::deserialize(de).map_err(|e| {
        let path = e.path().to_string();
        ScenarioError::invalid(if path == "." { "$".to_string() } else { path }, e.into_inner())
    })?;
    resolve(doc, base_dir)
}

fn read_network(path: &str, base_dir: Option<&Path>) -> Result<NetworkDocument, ScenarioError> {
    let full: PathBuf = match base_dir {
        Some(dir) if Path::new(path).is_relative() => dir.join(path),
        _ => PathBuf::from(path),
    };
    let text = std::fs::read_to_string(&full).map_err(|e| {
        if e.kind() == std::io::ErrorKind::NotFound {
            ScenarioError::invalid("network", format!("network file {} not found", full.display()))
        } else {
            ScenarioError::Io { path: full.display().to_string(), source: e }
        }
    })?;
    serde_json::from_str(&text).map_err(|e| ScenarioError::invalid(format!("network ({})", full.display()), e))
}

/// Validates `doc` and builds the runtime scenario. The stored document
/// always carries the network inline.
pub fn resolve(mut doc: ScenarioDocument, base_dir: Option<&Path>) -> Result<Scenario, ScenarioError> {
    if doc.format != SCENARIO_FORMAT {
        return Err(ScenarioError::invalid("format", format!("expected {SCENARIO_FORMAT}, found {}", doc.format)));
    }
    let net_doc = match &doc.network {
        NetworkSource::Inline(d) => d.clone(),
        NetworkSource::Path(p) => read_network(p, base_dir)?,
    };
    let net = net_doc.clone().into_network().map_err(|e| ScenarioError::invalid("network", e))?;
    doc.network = NetworkSource::Inline(net_doc);

    if !(doc.horizon_s.is_finite() && doc.horizon_s > 0.0) {
        return Err(ScenarioError::invalid("horizon_s", "must be positive"));
    }
    if !(doc.tick_s.is_finite() && doc.tick_s > 0.0) {
        return Err(ScenarioError::invalid("tick_s", "must be positive"));
    }
    if !(doc.service_time_s.is_finite() && doc.service_time_s >= 0.0) {
        return Err(ScenarioError::invalid("service_time_s", "must be non-negative"));
    }

    let mut fleet_nodes = Vec::with_capacity(doc.fleet.len());
    let mut seen = std::collections::BTreeSet::new();
    for (i, v) in doc.fleet.iter().enumerate() {
        if !seen.insert(v.id.as_str()) {
            return Err(ScenarioError::invalid(format!("fleet[{i}].id"), format!("duplicate vehicle {}", v.id)));
        }
        fleet_nodes.push(net.node_idx(&v.node).map_err(|e| ScenarioError::invalid(format!("fleet[{i}].node"), e))?);
    }

    let mut seen = std::collections::BTreeSet::new();
    for (i, r) in doc.requests.iter().enumerate() {
        if !seen.insert(r.id.as_str()) {
            return Err(ScenarioError::invalid(format!("requests[{i}].id"), format!("duplicate request {}", r.id)));
        }
        if !(r.release_time_s.is_finite() && r.release_time_s >= 0.0) {
            return Err(ScenarioError::invalid(format!("requests[{i}].release_time_s"), "must be non-negative"));
        }
        r.check_mode().map_err(|e| ScenarioError::invalid(format!("requests[{i}].mode"), e))?;
        net.node_idx(&r.pickup_node).map_err(|e| ScenarioError::invalid(format!("requests[{i}].pickup_node"), e))?;
        if let Some(d) = &r.destination_node {
            net.node_idx(d).map_err(|e| ScenarioError::invalid(format!("requests[{i}].destination_node"), e))?;
        }
    }

    let initial = apply_update(&net, &TrafficState::free_flow(&net), &doc.initial_state, 0.0)
        .map_err(|e| ScenarioError::invalid("initial_state", e))?;
    let mut probe = initial.clone();
    for (i, u) in doc.updates.iter().enumerate() {
        if !(u.time_s.is_finite() && u.time_s >= 0.0) {
            return Err(ScenarioError::invalid(format!("updates[{i}].time_s"), "must be non-negative"));
        }
        probe = apply_update(&net, &probe, &u.deltas, u.time_s)
            .map_err(|e| ScenarioError::invalid(format!("updates[{i}]"), e))?;
    }

    if let Some(bg) = &doc.background {
        if !(bg.step.is_finite() && (0.0..=1.0).contains(&bg.step)) {
            return Err(ScenarioError::invalid("background.step", "must lie in [0, 1]"));
        }
        if !(0.0..=1.0).contains(&bg.reversion) {
            return Err(ScenarioError::invalid("background.reversion", "must lie in [0, 1]"));
        }
    }

    let policy = match &doc.policy {
        PolicySource::Preset(key) => DeadlinePolicy::preset(key)
            .ok_or_else(|| ScenarioError::invalid("policy", format!("unknown preset `{key}`")))?,
        PolicySource::Custom(p) => p.clone(),
    };
    policy.validate().map_err(|e| ScenarioError::invalid("policy", e))?;
    doc.preemption.validate().map_err(|e| ScenarioError::invalid("preemption", e))?;
    if doc.task.k_routes == 0 {
        return Err(ScenarioError::invalid("task.k_routes", "must be at least 1"));
    }
    if !(doc.task.wcet_margin.is_finite() && doc.task.wcet_margin >= 1.0) {
        return Err(ScenarioError::invalid("task.wcet_margin", "must be at least 1"));
    }

    Ok(Scenario { document: doc, net, initial, policy, fleet_nodes })
}

impl Scenario {
    /// Canonical JSON of the resolved document.
    pub fn canonical_json(&self) -> String {
        serde_json::to_string(&self.document).expect("scenario serializes")
    }
}
