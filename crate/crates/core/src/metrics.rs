//! Percentile deadline compliance, mortality estimate and disturbance totals.

use serde::{Deserialize, Serialize};

use crate::analogy::{Criticality, DeadlinePolicy, Target};
use crate::kernel::{Outcome, Trace};

/// Extra mortality per minute of delay past the deadline.
pub const MORTALITY_PER_MINUTE: f64 = 0.01;

pub const REPORT_NOTE: &str =
    "mortality_delta applies 1% per minute to delay beyond the deadline only (C2/C3); unserved requests count as misses";

pub const CSV_HEADER: [&str; 6] = ["criticality", "count", "target_fraction", "target_s", "achieved", "pass"];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TargetResult {
    pub fraction: f64,
    pub seconds: f64,
    pub achieved: f64,
    pub pass: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassReport {
    /// "C0".."C3", or "C2+C3" for the combined life-threatening group.
    pub class: String,
    pub count: usize,
    pub unserved: usize,
    /// Nearest-rank percentiles; `None` when the rank lands on an unserved
    /// request or the class is empty.
    pub p50_s: Option<f64>,
    pub p90_s: Option<f64>,
    pub p95_s: Option<f64>,
    /// Empty for classes without targets or without requests.
    pub targets: Vec<TargetResult>,
    pub applicable: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComplianceReport {
    pub note: String,
    pub classes: Vec<ClassReport>,
    pub mortality_delta: f64,
    pub disturbance_veh_s: f64,
    pub unserved: usize,
}

impl ComplianceReport {
    pub fn class(&self, name: &str) -> Option<&ClassReport> {
        self.classes.iter().find(|c| c.class == name)
    }
}

/// Fraction of `responses` at or below `seconds`; `None` entries are misses.
pub fn achieved_fraction(responses: &[Option<f64>], seconds: f64) -> f64 {
    if responses.is_empty() {
        return 0.0;
    }
    let hits = responses.iter().filter(|r| r.is_some_and(|s| s <= seconds)).count();
    hits as f64 / responses.len() as f64
}

fn percentile(sorted: &[Option<f64>], q: f64) -> Option<f64> {
    if sorted.is_empty() {
        return None;
    }
    let rank = ((q * sorted.len() as f64).ceil() as usize).clamp(1, sorted.len());
    sorted[rank - 1]
}

fn class_report(class: String, outcomes: &[&Outcome], targets: &[Target]) -> ClassReport {
    let mut responses: Vec<Option<f64>> = outcomes.iter().map(|o| o.response_time_s).collect();
    responses.sort_by(|a, b| match (a, b) {
        (Some(x), Some(y)) => x.total_cmp(y),
        (Some(_), None) => std::cmp::Ordering::Less,
        (None, Some(_)) => std::cmp::Ordering::Greater,
        (None, None) => std::cmp::Ordering::Equal,
    });
    let applicable = !responses.is_empty();
    let targets = if applicable {
        targets
            .iter()
            .map(|t| {
                let achieved = achieved_fraction(&responses, t.seconds);
                TargetResult { fraction: t.fraction, seconds: t.seconds, achieved, pass: achieved >= t.fraction }
            })
            .collect()
    } else {
        Vec::new()
    };
    ClassReport {
        class,
        count: responses.len(),
        unserved: responses.iter().filter(|r| r.is_none()).count(),
        p50_s: percentile(&responses, 0.50),
        p90_s: percentile(&responses, 0.90),
        p95_s: percentile(&responses, 0.95),
        targets,
        applicable,
    }
}

/// Per-class compliance, highest criticality first, then the combined
/// C2+C3 group scored against the C3 targets.
pub fn compliance(trace: &Trace, policy: &DeadlinePolicy) -> ComplianceReport {
    let mut classes = Vec::new();
    for c in Criticality::ALL.into_iter().rev() {
        let of: Vec<&Outcome> = trace.outcomes.iter().filter(|o| o.criticality == c).collect();
        classes.push(class_report(c.to_string(), &of, policy.targets(c)));
    }
    let life: Vec<&Outcome> = trace.outcomes.iter().filter(|o| o.criticality.is_life_threatening()).collect();
    classes.push(class_report("C2+C3".into(), &life, policy.targets(Criticality::C3)));
    ComplianceReport {
        note: REPORT_NOTE.into(),
        classes,
        mortality_delta: mortality_delta(trace, policy),
        disturbance_veh_s: disturbance_total(trace),
        unserved: trace.outcomes.iter().filter(|o| o.response_time_s.is_none()).count(),
    }
}

/// Expected fractional mortality increase from C2/C3 lateness.
pub fn mortality_delta(trace: &Trace, policy: &DeadlinePolicy) -> f64 {
    trace
        .outcomes
        .iter()
        .filter(|o| o.criticality.is_life_threatening())
        .filter_map(|o| {
            let deadline = policy.deadline(o.criticality)?;
            let late = match o.response_time_s {
                Some(r) => r - deadline,
                None => trace.horizon_s - o.release_s - deadline,
            };
            Some(MORTALITY_PER_MINUTE * (late / 60.0).max(0.0))
        })
        .fold(0.0, |a, b| a + b)
}

/// Vehicle-seconds charged by every overlay applied during the run.
pub fn disturbance_total(trace: &Trace) -> f64 {
    trace.records.iter().filter_map(|r| r.f64_field("charged_veh_s")).fold(0.0, |a, b| a + b)
}

/// One row per (class, target) pair in [`CSV_HEADER`] order.
pub fn to_csv(report: &ComplianceReport) -> String {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(CSV_HEADER).expect("in-memory write");
    for c in &report.classes {
        for t in &c.targets {
            w.write_record([
                c.class.clone(),
                c.count.to_string(),
                t.fraction.to_string(),
                t.seconds.to_string(),
                format!("{:.4}", t.achieved),
                t.pass.to_string(),
            ])
            .expect("in-memory write");
        }
    }
    String::from_utf8(w.into_inner().expect("flush")).expect("utf8")
}

/// "C3: 4/4 within 480s | mortality_delta=0.000 | disturbance=150 veh-s"
pub fn summary_line(trace: &Trace, policy: &DeadlinePolicy, report: &ComplianceReport) -> String {
    let c3: Vec<&Outcome> = trace.outcomes.iter().filter(|o| o.criticality == Criticality::C3).collect();
    let bound = policy
        .targets(Criticality::C3)
        .first()
        .map(|t| t.seconds)
        .or(policy.deadline(Criticality::C3))
        .unwrap_or(f64::INFINITY);
    let within = c3.iter().filter(|o| o.response_time_s.is_some_and(|r| r <= bound)).count();
    format!(
        "C3: {within}/{} within {bound}s | mortality_delta={:.3} | disturbance={:.0} veh-s",
        c3.len(),
        report.mortality_delta,
        report.disturbance_veh_s
    )
}
