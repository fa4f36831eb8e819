//! Scenario files, live traffic feeds and trip lists.

use std::io::BufRead;

use serde::{Deserialize, Serialize};
use thiserror::Error;
use urbanflow_core::realtime::{Scenario, ScenarioEvent, DEFAULT_POLL_INTERVAL};
use urbanflow_core::{EdgeId, LatLon, TrafficSnapshot, TrafficUpdate};

#[derive(Debug, Error)]
pub enum ScenarioError {
    #[error("scenario: {0}")]
    Toml(#[from] toml::de::Error),
    #[error("scenario: {0}")]
    Invalid(#[from] urbanflow_core::realtime::RealtimeError),
    #[error("feed line {line}: {message}")]
    Feed { line: usize, message: String },
    #[error("trips: {0}")]
    Trips(String),
    #[error("io: {0}")]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct ScenarioFile {
    seed: u64,
    #[serde(default = "default_poll")]
    poll_interval: f64,
    #[serde(default)]
    events: Vec<EventRow>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct EventRow {
    t: f64,
    edge: u64,
    factor: f64,
}

fn default_poll() -> f64 {
    DEFAULT_POLL_INTERVAL
}

/// Reads a TOML scenario:
///
/// ```toml
/// seed = 1
/// poll_interval = 30
/// events = [ { t = 30, edge = 2, factor = 0.4 } ]
/// ```
pub fn parse_scenario_toml(text: &str) -> Result<Scenario, ScenarioError> {
    let f: ScenarioFile = toml::from_str(text)?;
    let sc = Scenario {
        seed: f.seed,
        poll_interval: f.poll_interval,
        events: f
            .events
            .into_iter()
            .map(|e| ScenarioEvent {
                t: e.t,
                edge: EdgeId(e.edge),
                factor: e.factor,
            })
            .collect(),
    };
    sc.validate()?;
    Ok(sc)
}

pub fn scenario_to_toml(sc: &Scenario) -> String {
    let mut s = format!("seed = {}\npoll_interval = {:?}\n", sc.seed, sc.poll_interval);
    if sc.events.is_empty() {
        s.push_str("events = []\n");
    }
    for e in &sc.events {
        s.push_str(&format!("\n[[events]]\nt = {:?}\nedge = {}\nfactor = {:?}\n", e.t, e.edge.0, e.factor));
    }
    s
}

/// Snapshot in force at time `at`: every event with `t <= at` applied in one batch.
pub fn snapshot_at(sc: &Scenario, at: f64) -> TrafficSnapshot {
    let updates: Vec<TrafficUpdate> = sc
        .events
        .iter()
        .filter(|e| e.t <= at)
        .map(|e| TrafficUpdate {
            edge_id: e.edge,
            observed_speed_factor: e.factor,
            timestamp: e.t,
        })
        .collect();
    if updates.is_empty() {
        return TrafficSnapshot::free_flow();
    }
    TrafficSnapshot::free_flow().apply_updates(&updates).0
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct FeedRecord {
    edge_id: u64,
    observed_speed_factor: f64,
    timestamp: f64,
}

/// Newline-delimited JSON feed of TrafficUpdate records. Blank lines are
/// skipped; timestamps must not go backwards.
pub fn read_feed<R: BufRead>(r: R) -> Result<Vec<TrafficUpdate>, ScenarioError> {
    let mut out: Vec<TrafficUpdate> = Vec::new();
    for (i, line) in r.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let rec: FeedRecord = serde_json::from_str(&line).map_err(|e| ScenarioError::Feed {
            line: i + 1,
            message: e.to_string(),
        })?;
        if let Some(prev) = out.last() {
            if rec.timestamp < prev.timestamp {
                return Err(ScenarioError::Feed {
                    line: i + 1,
                    message: format!("timestamp {} precedes {}", rec.timestamp, prev.timestamp),
                });
            }
        }
        out.push(TrafficUpdate {
            edge_id: EdgeId(rec.edge_id),
            observed_speed_factor: rec.observed_speed_factor,
            timestamp: rec.timestamp,
        });
    }
    Ok(out)
}

/// Point given as `{ "lat": .., "lon": .. }`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Point {
    pub lat: f64,
    pub lon: f64,
}

impl From<Point> for LatLon {
    fn from(p: Point) -> Self {
        LatLon::new(p.lat, p.lon)
    }
}

impl From<LatLon> for Point {
    fn from(p: LatLon) -> Self {
        Point { lat: p.lat, lon: p.lon }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TripSpec {
    pub id: u64,
    pub origin: Point,
    pub dest: Point,
}

/// JSON array of `{ "id", "origin": {lat, lon}, "dest": {lat, lon} }`.
pub fn parse_trips_json(text: &str) -> Result<Vec<TripSpec>, ScenarioError> {
    let trips: Vec<TripSpec> = serde_json::from_str(text).map_err(|e| ScenarioError::Trips(e.to_string()))?;
    let mut ids: Vec<u64> = trips.iter().map(|t| t.id).collect();
    ids.sort_unstable();
    if ids.windows(2).any(|w| w[0] == w[1]) {
        return Err(ScenarioError::Trips("duplicate trip id".into()));
    }
    for t in &trips {
        for p in [t.origin, t.dest] {
            if !LatLon::from(p).is_valid() {
                return Err(ScenarioError::Trips(format!("trip {}: coordinate out of range", t.id)));
            }
        }
    }
    Ok(trips)
}
