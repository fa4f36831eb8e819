//! Versioned traffic snapshots and edge travel-time costs.

use alloc::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::graph::{Edge, EdgeId};

/// Immutable map of edge speed factors. Edges absent from the map run at free flow.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct TrafficSnapshot {
    pub version: u64,
    /// Seconds on whatever clock the feed uses (virtual for scenarios).
    pub timestamp: f64,
    factors: BTreeMap<EdgeId, f64>,
}

/// One observed speed factor for an edge.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrafficUpdate {
    pub edge_id: EdgeId,
    pub observed_speed_factor: f64,
    pub timestamp: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct ApplySummary {
    pub applied: usize,
    pub rejected: usize,
}

/// A factor is usable when it lies in (0, 1].
pub fn valid_factor(f: f64) -> bool {
    f > 0.0 && f <= 1.0
}

impl TrafficSnapshot {
    /// Version 0, every edge at free flow.
    pub fn free_flow() -> Self {
        Self::default()
    }

    pub fn factor(&self, edge: EdgeId) -> f64 {
        self.factors.get(&edge).copied().unwrap_or(1.0)
    }

    pub fn factors(&self) -> &BTreeMap<EdgeId, f64> {
        &self.factors
    }

    /// Produces the next snapshot: version + 1, later updates overwrite earlier
    /// ones, untouched edges carry over. Out-of-range factors and updates whose
    /// timestamp goes backwards within the batch are rejected and counted.
    pub fn apply_updates(&self, updates: &[TrafficUpdate]) -> (TrafficSnapshot, ApplySummary) {
        let mut next = self.clone();
        next.version = self.version + 1;
        let mut summary = ApplySummary::default();
        let mut last_ts = f64::NEG_INFINITY;
        for u in updates {
            if !valid_factor(u.observed_speed_factor) || !u.timestamp.is_finite() || u.timestamp < last_ts {
                summary.rejected += 1;
                continue;
            }
            last_ts = u.timestamp;
            if u.observed_speed_factor == 1.0 {
                next.factors.remove(&u.edge_id);
            } else {
                next.factors.insert(u.edge_id, u.observed_speed_factor);
            }
            next.timestamp = next.timestamp.max(u.timestamp);
            summary.applied += 1;
        }
        (next, summary)
    }
}

/// Travel time in seconds: length / (base speed × factor).
pub fn edge_cost(edge: &Edge, snapshot: &TrafficSnapshot) -> f64 {
    edge.length_m / (edge.base_speed_mps * snapshot.factor(edge.id))
}
