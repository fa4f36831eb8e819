//! Client for a GraphHopper-compatible routing endpoint, used to cross-check
//! engine routes. The engine never depends on it.

use std::time::Duration;

use serde::{Deserialize, Serialize};
use serde_json::Value;
use thiserror::Error;
use urbanflow_core::LatLon;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ExternalRouterConfig {
    /// Base URL, e.g. `http://localhost:8989`; `/route` is appended.
    pub base_url: String,
    pub api_key: Option<String>,
    pub profile: String,
    pub timeout_ms: u64,
}

impl Default for ExternalRouterConfig {
    fn default() -> Self {
        Self {
            base_url: "http://localhost:8989".into(),
            api_key: None,
            profile: "car".into(),
            timeout_ms: 5000,
        }
    }
}

#[derive(Debug, Error, PartialEq)]
pub enum ExternalError {
    #[error("external router timed out")]
    Timeout,
    #[error("external router rate limited the request (retry after {retry_after_s:?} s)")]
    RateLimited { retry_after_s: Option<u64> },
    #[error("external router returned status {status}: {body}")]
    Status { status: u16, body: String },
    #[error("malformed external router response: {0}")]
    Malformed(String),
    #[error("external router unreachable: {0}")]
    Transport(String),
}

/// Route-like record parsed from the external response.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExternalRoute {
    pub distance_m: f64,
    pub time_s: f64,
    pub geometry: Vec<LatLon>,
}

/// Engine route next to the external one.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RouteComparison {
    pub engine_cost_s: f64,
    pub engine_distance_m: f64,
    pub external_time_s: f64,
    pub external_distance_m: f64,
    /// engine cost / external time
    pub time_ratio: f64,
}

pub fn compare(engine_cost_s: f64, engine_distance_m: f64, ext: &ExternalRoute) -> RouteComparison {
    RouteComparison {
        engine_cost_s,
        engine_distance_m,
        external_time_s: ext.time_s,
        external_distance_m: ext.distance_m,
        time_ratio: engine_cost_s / ext.time_s,
    }
}

fn map_transport(e: ureq::Error) -> ExternalError {
    match e {
        ureq::Error::Timeout(_) => ExternalError::Timeout,
        ureq::Error::Io(io) if io.kind() == std::io::ErrorKind::TimedOut => ExternalError::Timeout,
        other => ExternalError::Transport(other.to_string()),
    }
}

pub fn external_router_query(cfg: &ExternalRouterConfig, origin: LatLon, dest: LatLon) -> Result<ExternalRoute, ExternalError> {
    let agent: ureq::Agent = ureq::Agent::config_builder()
        .timeout_global(Some(Duration::from_millis(cfg.timeout_ms)))
        .http_status_as_error(false)
        .build()
        .into();
    let url = format!("{}/route", cfg.base_url.trim_end_matches('/'));
    let mut req = agent
        .get(&url)
        .query("point", format!("{},{}", origin.lat, origin.lon))
        .query("point", format!("{},{}", dest.lat, dest.lon))
        .query("profile", &cfg.profile)
        .query("points_encoded", "false");
    if let Some(k) = &cfg.api_key {
        req = req.query("key", k);
    }
    let mut resp = req.call().map_err(map_transport)?;
    let status = resp.status().as_u16();
    if status == 429 {
        let retry_after_s = resp
            .headers()
            .get("retry-after")
            .and_then(|v| v.to_str().ok())
            .and_then(|v| v.trim().parse().ok());
        return Err(ExternalError::RateLimited { retry_after_s });
    }
    let body = resp.body_mut().read_to_string().map_err(|e| match map_transport(e) {
        ExternalError::Timeout => ExternalError::Timeout,
        other => ExternalError::Malformed(format!("body could not be read: {other}")),
    })?;
    if !(200..300).contains(&status) {
        return Err(ExternalError::Status {
            status,
            body: body.chars().take(500).collect(),
        });
    }
    parse_route_body(&body)
}

/// Reads `paths[0]` of a GraphHopper response: distance in meters, time in
/// milliseconds, points as GeoJSON coordinates or an encoded polyline.
pub fn parse_route_body(body: &str) -> Result<ExternalRoute, ExternalError> {
    let bad = |m: &str| ExternalError::Malformed(m.to_string());
    let v: Value = serde_json::from_str(body).map_err(|e| ExternalError::Malformed(e.to_string()))?;
    let path = v
        .get("paths")
        .and_then(|p| p.as_array())
        .and_then(|p| p.first())
        .ok_or_else(|| bad("no paths"))?;
    let distance_m = path.get("distance").and_then(Value::as_f64).ok_or_else(|| bad("missing distance"))?;
    let time_ms = path.get("time").and_then(Value::as_f64).ok_or_else(|| bad("missing time"))?;
    let geometry = match path.get("points") {
        None | Some(Value::Null) => Vec::new(),
        Some(Value::String(s)) => decode_polyline(s).ok_or_else(|| bad("bad encoded polyline"))?,
        Some(obj) => obj
            .get("coordinates")
            .and_then(Value::as_array)
            .ok_or_else(|| bad("points without coordinates"))?
            .iter()
            .map(|c| {
                let lon = c.get(0).and_then(Value::as_f64)?;
                let lat = c.get(1).and_then(Value::as_f64)?;
                Some(LatLon::new(lat, lon))
            })
            .collect::<Option<Vec<_>>>()
            .ok_or_else(|| bad("bad coordinate"))?,
    };
    if !(distance_m >= 0.0 && time_ms >= 0.0) {
        return Err(bad("negative distance or time"));
    }
    Ok(ExternalRoute {
        distance_m,
        time_s: time_ms / 1000.0,
        geometry,
    })
}

/// Google encoded polyline, precision 1e5.
pub fn decode_polyline(s: &str) -> Option<Vec<LatLon>> {
    let bytes = s.as_bytes();
    let mut i = 0;
    let next = |i: &mut usize| -> Option<i64> {
        let mut result = 0i64;
        let mut shift = 0;
        loop {
            let b = i64::from(*bytes.get(*i)?) - 63;
            *i += 1;
            if !(0..64).contains(&b) || shift > 60 {
                return None;
            }
            result |= (b & 0x1f) << shift;
            shift += 5;
            if b < 0x20 {
                break;
            }
        }
        Some(if result & 1 == 1 { !(result >> 1) } else { result >> 1 })
    };
    let (mut lat, mut lon) = (0i64, 0i64);
    let mut out = Vec::new();
    while i < bytes.len() {
        lat += next(&mut i)?;
        lon += next(&mut i)?;
        out.push(LatLon::new(lat as f64 / 1e5, lon as f64 / 1e5));
    }
    Some(out)
}
