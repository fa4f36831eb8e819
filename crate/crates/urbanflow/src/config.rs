//! Service configuration file (TOML).

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use urbanflow_core::realtime::DEFAULT_THRESHOLD;
use urbanflow_core::spatiotemporal::DEFAULT_MIN_SUPPORT;

use crate::tz::DEFAULT_TZ;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ServiceConfig {
    #[serde(default = "default_bind")]
    pub bind: String,
    pub graph: PathBuf,
    #[serde(default)]
    pub duration_model: Option<PathBuf>,
    /// Cleaned trips used to build congestion analytics at startup.
    #[serde(default)]
    pub data: Option<PathBuf>,
    #[serde(default)]
    pub scenario: Option<PathBuf>,
    #[serde(default = "default_threshold")]
    pub threshold: f64,
    #[serde(default = "default_grid")]
    pub grid: String,
    #[serde(default = "default_min_support")]
    pub min_support: usize,
    #[serde(default = "default_tz")]
    pub timezone: String,
}

fn default_bind() -> String {
    "127.0.0.1:8080".into()
}
fn default_threshold() -> f64 {
    DEFAULT_THRESHOLD
}
fn default_grid() -> String {
    "40x40".into()
}
fn default_min_support() -> usize {
    DEFAULT_MIN_SUPPORT
}
fn default_tz() -> String {
    DEFAULT_TZ.into()
}

impl ServiceConfig {
    pub fn parse(text: &str) -> Result<Self, String> {
        toml::from_str(text).map_err(|e| e.to_string())
    }

    /// Resolves relative paths against `base` (normally the working directory).
    pub fn resolve(mut self, base: &Path) -> Self {
        let fix = |p: &mut PathBuf| {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        };
        fix(&mut self.graph);
        for p in [&mut self.duration_model, &mut self.data, &mut self.scenario].into_iter().flatten() {
            fix(p);
        }
        self
    }
}

/// Parses `ROWSxCOLS`.
pub fn parse_grid_dims(s: &str) -> Result<(usize, usize), String> {
    let (r, c) = s
        .split_once(['x', 'X'])
        .ok_or_else(|| format!("grid must look like 40x40, got `{s}`"))?;
    let r: usize = r.trim().parse().map_err(|_| format!("bad grid rows `{r}`"))?;
    let c: usize = c.trim().parse().map_err(|_| format!("bad grid cols `{c}`"))?;
    if r == 0 || c == 0 {
        return Err("grid dimensions must be positive".into());
    }
    Ok((r, c))
}

/// Parses `lat,lon`.
pub fn parse_lat_lon(s: &str) -> Result<urbanflow_core::LatLon, String> {
    let (a, b) = s.split_once(',').ok_or_else(|| format!("expected lat,lon, got `{s}`"))?;
    let lat: f64 = a.trim().parse().map_err(|_| format!("bad latitude `{a}`"))?;
    let lon: f64 = b.trim().parse().map_err(|_| format!("bad longitude `{b}`"))?;
    let p = urbanflow_core::LatLon::new(lat, lon);
    if !p.is_valid() {
        return Err(format!("coordinate out of range: {s}"));
    }
    Ok(p)
}
