use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use serde_json::{Map, Value};
use sha2::{Digest, Sha256};
use thiserror::Error;

use super::Variant;
use crate::analogy::Criticality;
use crate::preemption::PreemptionLevel;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum EventKind {
    RequestArrival,
    Queued,
    PriorityAltered,
    Dispatch,
    EdgeEntered,
    EntryBlocked,
    EdgeExited,
    ServiceCompleted,
    VehicleReleased,
    StateUpdate,
    Reevaluation,
    Rerouted,
    EscalationApplied,
    PredictedMiss,
    OverlayExpiry,
    HorizonExceeded,
}

/// One line of the event log. `data` holds the kind-specific payload.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceRecord {
    pub seq: u64,
    pub t_ms: i64,
    pub kind: EventKind,
    #[serde(flatten)]
    pub data: Map<String, Value>,
}

impl TraceRecord {
    pub fn time_s(&self) -> f64 {
        self.t_ms as f64 / 1000.0
    }

    pub fn str_field(&self, key: &str) -> Option<&str> {
        self.data.get(key).and_then(Value::as_str)
    }

    pub fn f64_field(&self, key: &str) -> Option<f64> {
        self.data.get(key).and_then(Value::as_f64)
    }

    pub fn request(&self) -> Option<&str> {
        self.str_field("request")
    }
}

/// Per-request result.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Outcome {
    pub request: String,
    pub criticality: Criticality,
    pub release_s: f64,
    /// Relative deadline from the policy; `None` is unbounded.
    pub deadline_s: Option<f64>,
    /// Pickup arrival minus release; `None` if unserved by the horizon.
    pub response_time_s: Option<f64>,
    pub met: bool,
    pub final_p: PreemptionLevel,
    pub disturbance: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct Footer {
    kind: String,
    seed: u64,
    variant: Variant,
    config_digest: String,
    horizon_s: f64,
    events: usize,
    outcomes: Vec<Outcome>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Trace {
    pub seed: u64,
    pub variant: Variant,
    pub config_digest: String,
    pub horizon_s: f64,
    pub records: Vec<TraceRecord>,
    pub outcomes: Vec<Outcome>,
}

#[derive(Debug, Error, PartialEq)]
pub enum TraceError {
    #[error("unknown request {0}")]
    UnknownRequest(String),
    #[error("malformed trace line {line}: {reason}")]
    Malformed { line: usize, reason: String },
}

/// Response time or the fact that the horizon came first.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Response {
    Seconds(f64),
    Unserved,
}

fn hex_digest(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

impl Trace {
    /// Event lines followed by a summary footer line.
    pub fn to_ndjson(&self) -> String {
        let mut out = String::new();
        for r in &self.records {
            out.push_str(&serde_json::to_string(r).expect("record serializes"));
            out.push('\n');
        }
        let footer = Footer {
            kind: "Summary".into(),
            seed: self.seed,
            variant: self.variant,
            config_digest: self.config_digest.clone(),
            horizon_s: self.horizon_s,
            events: self.records.len(),
            outcomes: self.outcomes.clone(),
        };
        out.push_str(&serde_json::to_string(&footer).expect("footer serializes"));
        out.push('\n');
        out
    }

    /// sha256 of the NDJSON form.
    pub fn digest(&self) -> String {
        hex_digest(self.to_ndjson().as_bytes())
    }

    pub fn from_ndjson(text: &str) -> Result<Trace, TraceError> {
        let lines: Vec<&str> = text.lines().filter(|l| !l.trim().is_empty()).collect();
        let Some((last, body)) = lines.split_last() else {
            return Err(TraceError::Malformed { line: 0, reason: "empty trace".into() });
        };
        let mut records = Vec::with_capacity(body.len());
        for (i, l) in body.iter().enumerate() {
            records.push(
                serde_json::from_str(l).map_err(|e| TraceError::Malformed { line: i + 1, reason: e.to_string() })?,
            );
        }
        let footer: Footer = serde_json::from_str(last)
            .map_err(|e| TraceError::Malformed { line: lines.len(), reason: e.to_string() })?;
        if footer.kind != "Summary" || footer.events != records.len() {
            return Err(TraceError::Malformed { line: lines.len(), reason: "footer does not match body".into() });
        }
        Ok(Trace {
            seed: footer.seed,
            variant: footer.variant,
            config_digest: footer.config_digest,
            horizon_s: footer.horizon_s,
            records,
            outcomes: footer.outcomes,
        })
    }

    pub fn outcome(&self, request: &str) -> Option<&Outcome> {
        self.outcomes.iter().find(|o| o.request == request)
    }
}

/// Response time of `request` read from the raw event log.
pub fn response_time(trace: &Trace, request: &str) -> Result<Response, TraceError> {
    let mut known = false;
    for r in &trace.records {
        if r.request() != Some(request) {
            continue;
        }
        match r.kind {
            EventKind::RequestArrival | EventKind::HorizonExceeded => known = true,
            EventKind::ServiceCompleted => {
                let release = r.f64_field("release_s").unwrap_or(0.0);
                return Ok(Response::Seconds(r.time_s() - release));
            }
            _ => {}
        }
    }
    if known {
        Ok(Response::Unserved)
    } else {
        Err(TraceError::UnknownRequest(request.to_string()))
    }
}

fn level_field(r: &TraceRecord, key: &str) -> Option<PreemptionLevel> {
    r.data.get(key).and_then(|v| serde_json::from_value(v.clone()).ok())
}

/// Rebuilds per-request outcomes from the event log alone.
pub fn outcomes_from_log(records: &[TraceRecord]) -> Vec<Outcome> {
    let mut order: Vec<String> = Vec::new();
    let mut by_id: BTreeMap<String, Outcome> = BTreeMap::new();
    for r in records {
        let Some(id) = r.request() else { continue };
        match r.kind {
            EventKind::RequestArrival | EventKind::HorizonExceeded
                if !by_id.contains_key(id) => {
                    let criticality =
                        r.data.get("criticality").and_then(|v| serde_json::from_value(v.clone()).ok());
                    let Some(criticality) = criticality else { continue };
                    order.push(id.to_string());
                    by_id.insert(
                        id.to_string(),
                        Outcome {
                            request: id.to_string(),
                            criticality,
                            release_s: r.f64_field("release_s").unwrap_or(0.0),
                            deadline_s: r.f64_field("deadline_s"),
                            response_time_s: None,
                            met: false,
                            final_p: PreemptionLevel::P0,
                            disturbance: 0.0,
                        },
                    );
                }
            _ => {}
        }
        let Some(o) = by_id.get_mut(id) else { continue };
        if let Some(c) = r.f64_field("charged_veh_s") {
            o.disturbance += c;
        }
        for key in ["p", "to"] {
            if let Some(p) = level_field(r, key) {
                o.final_p = o.final_p.max(p);
            }
        }
        if r.kind == EventKind::ServiceCompleted {
            let resp = r.time_s() - o.release_s;
            o.response_time_s = Some(resp);
            o.met = o.deadline_s.is_none_or(|d| resp <= d);
        }
    }
    order.into_iter().filter_map(|id| by_id.remove(&id)).collect()
}
