use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::Criticality;

/// Contractual target: `fraction` of cases answered within `seconds`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Target {
    pub fraction: f64,
    pub seconds: f64,
}

impl Target {
    pub const fn new(fraction: f64, seconds: f64) -> Self {
        Self { fraction, seconds }
    }
}

/// Relative deadlines and percentile targets per criticality. A missing or
/// `null` deadline means best effort (unbounded).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DeadlinePolicy {
    #[serde(default)]
    pub name: Option<String>,
    pub deadlines: BTreeMap<Criticality, Option<f64>>,
    #[serde(default)]
    pub targets: BTreeMap<Criticality, Vec<Target>>,
}

/// Preset keys accepted by [`DeadlinePolicy::preset`].
pub const PRESETS: [&str; 5] = ["nz", "uk", "usa", "au", "hk"];

/// Orange (C1) deadline: the 95th-percentile bound of the NZ contract.
pub const ORANGE_DEADLINE_S: f64 = 1200.0;

impl Default for DeadlinePolicy {
    fn default() -> Self {
        Self::preset("nz").expect("nz preset")
    }
}

impl DeadlinePolicy {
    /// Built-in policies. Purple/red (C3, C2) deadlines equal the tightest
    /// target time of the preset; C1 gets [`ORANGE_DEADLINE_S`]; C0 is
    /// unbounded.
    pub fn preset(key: &str) -> Option<Self> {
        let targets = match key.to_ascii_lowercase().as_str() {
            "nz" => vec![Target::new(0.5, 480.0), Target::new(0.95, 1200.0)],
            "uk" => vec![Target::new(0.75, 480.0)],
            "usa" => vec![Target::new(0.90, 539.0)],
            "au" => vec![Target::new(0.5, 600.0)],
            "hk" => vec![Target::new(0.92, 720.0)],
            _ => return None,
        };
        let critical_deadline = targets.iter().map(|t| t.seconds).fold(f64::INFINITY, f64::min);
        let deadlines = BTreeMap::from([
            (Criticality::C0, None),
            (Criticality::C1, Some(ORANGE_DEADLINE_S)),
            (Criticality::C2, Some(critical_deadline)),
            (Criticality::C3, Some(critical_deadline)),
        ]);
        let targets = BTreeMap::from([(Criticality::C2, targets.clone()), (Criticality::C3, targets)]);
        Some(Self { name: Some(key.to_ascii_lowercase()), deadlines, targets })
    }

    pub fn deadline(&self, c: Criticality) -> Option<f64> {
        self.deadlines.get(&c).copied().flatten()
    }

    pub fn targets(&self, c: Criticality) -> &[Target] {
        self.targets.get(&c).map_or(&[], Vec::as_slice)
    }

    pub fn validate(&self) -> Result<(), String> {
        for (c, d) in &self.deadlines {
            if let Some(d) = d {
                if !(d.is_finite() && *d > 0.0) {
                    return Err(format!("deadlines.{c:?}: must be positive"));
                }
            }
        }
        for (c, ts) in &self.targets {
            for (i, t) in ts.iter().enumerate() {
                if !(t.fraction > 0.0 && t.fraction <= 1.0) {
                    return Err(format!("targets.{c:?}[{i}].fraction: must lie in (0, 1]"));
                }
                if !(t.seconds.is_finite() && t.seconds > 0.0) {
                    return Err(format!("targets.{c:?}[{i}].seconds: must be positive"));
                }
            }
            if ts.windows(2).any(|w| w[0].seconds > w[1].seconds) {
                return Err(format!("targets.{c:?}: pairs must be sorted by seconds"));
            }
        }
        Ok(())
    }
}

/// Relative deadline for `criticality`; `None` is unbounded.
pub fn deadline_for(criticality: Criticality, policy: &DeadlinePolicy) -> Option<f64> {
    policy.deadline(criticality)
}
