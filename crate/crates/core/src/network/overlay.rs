use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::EdgeIdx;

/// EV-only privileges on one edge.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EdgeOverlay {
    /// Downstream signal held green for the EV.
    pub forced_green: bool,
    pub reserved_lane: bool,
    /// Multiplier on the speed limit, `>= 1`.
    pub speed_cap_factor: f64,
    /// EV may use the opposing carriageway.
    pub reverse_enabled: bool,
}

impl Default for EdgeOverlay {
    fn default() -> Self {
        Self { forced_green: false, reserved_lane: false, speed_cap_factor: 1.0, reverse_enabled: false }
    }
}

impl EdgeOverlay {
    pub fn is_identity(&self) -> bool {
        *self == Self::default()
    }
}

/// Sparse set of per-edge privileges with recovery deadlines. The empty
/// overlay is the identity.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct NetworkOverlay {
    flags: BTreeMap<EdgeIdx, EdgeOverlay>,
    expiry: BTreeMap<EdgeIdx, f64>,
}

impl NetworkOverlay {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn is_empty(&self) -> bool {
        self.flags.is_empty()
    }

    pub fn len(&self) -> usize {
        self.flags.len()
    }

    pub fn flags(&self, e: EdgeIdx) -> EdgeOverlay {
        self.flags.get(&e).copied().unwrap_or_default()
    }

    pub fn get(&self, e: EdgeIdx) -> Option<&EdgeOverlay> {
        self.flags.get(&e)
    }

    /// Sets flags for `e`; identity flags remove the entry.
    pub fn set(&mut self, e: EdgeIdx, flags: EdgeOverlay) {
        if flags.is_identity() {
            self.flags.remove(&e);
            self.expiry.remove(&e);
        } else {
            self.flags.insert(e, flags);
        }
    }

    pub fn set_expiry(&mut self, e: EdgeIdx, t_s: f64) {
        if self.flags.contains_key(&e) {
            self.expiry.insert(e, t_s);
        }
    }

    pub fn expiry(&self, e: EdgeIdx) -> Option<f64> {
        self.expiry.get(&e).copied()
    }

    pub fn remove(&mut self, e: EdgeIdx) {
        self.flags.remove(&e);
        self.expiry.remove(&e);
    }

    pub fn edges(&self) -> impl Iterator<Item = (EdgeIdx, &EdgeOverlay)> + '_ {
        self.flags.iter().map(|(e, f)| (*e, f))
    }

    pub fn expiries(&self) -> impl Iterator<Item = (EdgeIdx, f64)> + '_ {
        self.expiry.iter().map(|(e, t)| (*e, *t))
    }

    /// Merges `other` into `self`, taking the stronger privilege and later
    /// expiry per edge.
    pub fn absorb(&mut self, other: &NetworkOverlay) {
        for (e, f) in other.edges() {
            let cur = self.flags(e);
            self.set(
                e,
                EdgeOverlay {
                    forced_green: cur.forced_green || f.forced_green,
                    reserved_lane: cur.reserved_lane || f.reserved_lane,
                    speed_cap_factor: cur.speed_cap_factor.max(f.speed_cap_factor),
                    reverse_enabled: cur.reverse_enabled || f.reverse_enabled,
                },
            );
        }
        for (e, t) in other.expiries() {
            let t = self.expiry(e).map_or(t, |cur| cur.max(t));
            self.set_expiry(e, t);
        }
    }
}
