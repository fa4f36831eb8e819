//! Heatmap file formats.
//!
//! Grid text: a header line `rows cols lat_min lon_min lat_max lon_max`, then
//! one line per grid row starting with row 0 (the southern edge), values
//! separated by single spaces, `NA` for cells without data.
//!
//! GeoJSON: a FeatureCollection with one Polygon per populated cell carrying
//! `value`, `row` and `col` properties. The collection also carries the grid
//! spec and heatmap kind so it can be read back into a matrix.

use std::fmt::Write as _;
use std::str::FromStr;

use serde_json::{json, Map, Value};
use thiserror::Error;
use urbanflow_core::spatiotemporal::{BinFilter, GridSpec, Heatmap, HeatmapKind};
use urbanflow_core::BBox;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum HeatmapFormat {
    GridText,
    GeoJson,
}

impl FromStr for HeatmapFormat {
    type Err = ExportError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "grid" | "grid-text" | "txt" => Ok(HeatmapFormat::GridText),
            "geojson" | "geo" => Ok(HeatmapFormat::GeoJson),
            other => Err(ExportError::UnknownFormat(other.to_string())),
        }
    }
}

impl HeatmapFormat {
    /// Guess from a file extension, defaulting to GeoJSON.
    pub fn for_path(path: &std::path::Path) -> Self {
        match path.extension().and_then(|e| e.to_str()) {
            Some("txt") | Some("grid") => HeatmapFormat::GridText,
            _ => HeatmapFormat::GeoJson,
        }
    }
}

#[derive(Debug, Error, PartialEq)]
pub enum ExportError {
    #[error("unknown heatmap format `{0}` (expected grid or geojson)")]
    UnknownFormat(String),
    #[error("heatmap parse error: {0}")]
    Parse(String),
}

pub fn export_heatmap(hm: &Heatmap, format: HeatmapFormat) -> Vec<u8> {
    match format {
        HeatmapFormat::GridText => to_grid_text(hm).into_bytes(),
        HeatmapFormat::GeoJson => {
            let mut s = serde_json::to_string_pretty(&to_geojson(hm)).expect("json");
            s.push('\n');
            s.into_bytes()
        }
    }
}

pub fn to_grid_text(hm: &Heatmap) -> String {
    let g = &hm.grid;
    let b = &g.bbox;
    let mut s = format!("{} {} {} {} {} {}\n", g.rows, g.cols, b.lat_min, b.lon_min, b.lat_max, b.lon_max);
    for r in 0..g.rows {
        for c in 0..g.cols {
            if c > 0 {
                s.push(' ');
            }
            match hm.get(r, c) {
                Some(v) => write!(s, "{v}").expect("write to string"),
                None => s.push_str("NA"),
            }
        }
        s.push('\n');
    }
    s
}

pub fn parse_grid_text(text: &str) -> Result<(GridSpec, Vec<Option<f64>>), ExportError> {
    let err = |m: String| ExportError::Parse(m);
    let mut lines = text.lines();
    let header: Vec<&str> = lines.next().ok_or_else(|| err("empty input".into()))?.split_whitespace().collect();
    if header.len() != 6 {
        return Err(err(format!("header needs 6 fields, got {}", header.len())));
    }
    let rows: usize = header[0].parse().map_err(|_| err("bad rows".into()))?;
    let cols: usize = header[1].parse().map_err(|_| err("bad cols".into()))?;
    let f = |i: usize| header[i].parse::<f64>().map_err(|_| err(format!("bad bbox field `{}`", header[i])));
    let bbox = BBox::new(f(2)?, f(3)?, f(4)?, f(5)?);
    let grid = GridSpec::new(bbox, rows, cols).map_err(|e| err(e.to_string()))?;
    let mut values = Vec::with_capacity(rows * cols);
    for r in 0..rows {
        let line = lines.next().ok_or_else(|| err(format!("missing row {r}")))?;
        let cells: Vec<&str> = line.split(' ').collect();
        if cells.len() != cols {
            return Err(err(format!("row {r} has {} values, expected {cols}", cells.len())));
        }
        for c in cells {
            values.push(if c == "NA" {
                None
            } else {
                Some(c.parse::<f64>().map_err(|_| err(format!("bad value `{c}` in row {r}")))?)
            });
        }
    }
    Ok((grid, values))
}

fn kind_name(k: HeatmapKind) -> &'static str {
    match k {
        HeatmapKind::Density => "density",
        HeatmapKind::CongestionIndex => "congestion_index",
    }
}

pub fn to_geojson(hm: &Heatmap) -> Value {
    let g = &hm.grid;
    let mut features = Vec::new();
    for r in 0..g.rows {
        for c in 0..g.cols {
            let Some(v) = hm.get(r, c) else { continue };
            let (s, n) = (g.lat_edge(r), g.lat_edge(r + 1));
            let (w, e) = (g.lon_edge(c), g.lon_edge(c + 1));
            features.push(json!({
                "type": "Feature",
                "geometry": {
                    "type": "Polygon",
                    "coordinates": [[[w, s], [e, s], [e, n], [w, n], [w, s]]],
                },
                "properties": { "value": v, "row": r, "col": c },
            }));
        }
    }
    let mut grid = Map::new();
    grid.insert("rows".into(), json!(g.rows));
    grid.insert("cols".into(), json!(g.cols));
    grid.insert(
        "bbox".into(),
        json!([g.bbox.lat_min, g.bbox.lon_min, g.bbox.lat_max, g.bbox.lon_max]),
    );
    json!({
        "type": "FeatureCollection",
        "kind": kind_name(hm.kind),
        "filter": { "day": hm.filter.day, "hour": hm.filter.hour },
        "grid": grid,
        "features": features,
    })
}

pub fn parse_geojson(text: &str) -> Result<Heatmap, ExportError> {
    let err = |m: &str| ExportError::Parse(m.to_string());
    let v: Value = serde_json::from_str(text).map_err(|e| ExportError::Parse(e.to_string()))?;
    let grid = v.get("grid").ok_or_else(|| err("missing grid"))?;
    let num = |x: &Value| x.as_f64().ok_or_else(|| err("expected number"));
    let bb = grid["bbox"].as_array().filter(|a| a.len() == 4).ok_or_else(|| err("bad bbox"))?;
    let bbox = BBox::new(num(&bb[0])?, num(&bb[1])?, num(&bb[2])?, num(&bb[3])?);
    let rows = grid["rows"].as_u64().ok_or_else(|| err("bad rows"))? as usize;
    let cols = grid["cols"].as_u64().ok_or_else(|| err("bad cols"))? as usize;
    let spec = GridSpec::new(bbox, rows, cols).map_err(|e| ExportError::Parse(e.to_string()))?;
    let kind = match v["kind"].as_str() {
        Some("density") => HeatmapKind::Density,
        Some("congestion_index") => HeatmapKind::CongestionIndex,
        _ => return Err(err("bad kind")),
    };
    let filter = BinFilter {
        day: v["filter"]["day"].as_u64().map(|d| d as u8),
        hour: v["filter"]["hour"].as_u64().map(|h| h as u8),
    };
    let mut values = vec![None; rows * cols];
    for f in v["features"].as_array().ok_or_else(|| err("missing features"))? {
        let p = &f["properties"];
        let (r, c) = (p["row"].as_u64().ok_or_else(|| err("bad row"))? as usize, p["col"].as_u64().ok_or_else(|| err("bad col"))? as usize);
        if r >= rows || c >= cols {
            return Err(err("cell outside grid"));
        }
        values[r * cols + c] = Some(num(&p["value"])?);
    }
    Ok(Heatmap {
        grid: spec,
        kind,
        filter,
        values,
    })
}
