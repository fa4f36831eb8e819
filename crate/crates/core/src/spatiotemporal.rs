//! Time-binned and grid-binned congestion indices, Gaussian kernel density
//! surfaces, and peak-period selection.
//!
//! The congestion index of a set of trips is their mean minutes per mile.

use alloc::collections::BTreeMap;
use alloc::vec;
use alloc::vec::Vec;
use core::f64::consts::PI;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geo::{BBox, LatLon, LocalProjection};
use crate::math;
use crate::trips::EngineeredTrip;

pub const BIN_COUNT: usize = 168;

/// Minimum trips for a cell-bin to carry an index.
pub const DEFAULT_MIN_SUPPORT: usize = 10;

/// Default KDE bandwidth in meters.
pub const DEFAULT_BANDWIDTH_M: f64 = 250.0;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SpatialError {
    #[error("grid must have at least one row and column over a non-degenerate bbox")]
    InvalidGrid,
    #[error("bandwidth must be positive and finite, got {0}")]
    BadBandwidth(f64),
    #[error("density needs at least one point")]
    NoPoints,
    #[error("cells were aggregated on a different grid")]
    GridMismatch,
}

/// (day of week, hour) with Monday = 0.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct TimeBin {
    pub day: u8,
    pub hour: u8,
}

impl TimeBin {
    pub fn new(day: u8, hour: u8) -> Option<Self> {
        (day < 7 && hour < 24).then_some(Self { day, hour })
    }

    pub fn index(self) -> usize {
        self.day as usize * 24 + self.hour as usize
    }

    pub fn from_index(i: usize) -> Self {
        Self {
            day: (i / 24) as u8,
            hour: (i % 24) as u8,
        }
    }

    pub fn all() -> impl Iterator<Item = TimeBin> {
        (0..BIN_COUNT).map(TimeBin::from_index)
    }

    pub fn is_weekday(self) -> bool {
        self.day < 5
    }
}

fn minutes_per_mile(t: &EngineeredTrip) -> Option<f64> {
    (t.record.trip_distance > 0.0).then(|| t.duration_sec as f64 / 60.0 / t.record.trip_distance)
}

/// Trip count and congestion index for one bin.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct BinStat {
    pub trip_count: usize,
    /// `None` when no trip with positive distance fell in the bin.
    pub congestion_index: Option<f64>,
}

/// Congestion index for every (day, hour) bin.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TemporalProfile {
    pub bins: Vec<BinStat>,
}

impl TemporalProfile {
    pub fn get(&self, bin: TimeBin) -> BinStat {
        self.bins[bin.index()]
    }

    pub fn total_trips(&self) -> usize {
        self.bins.iter().map(|b| b.trip_count).sum()
    }

    /// Present bins as (bin, index).
    pub fn present(&self) -> impl Iterator<Item = (TimeBin, f64)> + '_ {
        self.bins
            .iter()
            .enumerate()
            .filter_map(|(i, b)| b.congestion_index.map(|v| (TimeBin::from_index(i), v)))
    }

    /// Trip-weighted index per hour of day, pooled over `days`.
    pub fn by_hour(&self, days: impl Fn(u8) -> bool) -> Vec<Option<f64>> {
        (0..24u8)
            .map(|h| pooled(self.bins.iter().enumerate().filter(|(i, _)| {
                let b = TimeBin::from_index(*i);
                b.hour == h && days(b.day)
            }).map(|(_, s)| s)))
            .collect()
    }

    /// Trip-weighted index per day of week.
    pub fn by_day(&self) -> Vec<Option<f64>> {
        (0..7u8)
            .map(|d| pooled(self.bins.iter().enumerate().filter(|(i, _)| TimeBin::from_index(*i).day == d).map(|(_, s)| s)))
            .collect()
    }
}

fn pooled<'a>(stats: impl Iterator<Item = &'a BinStat>) -> Option<f64> {
    let (mut w, mut s) = (0.0, 0.0);
    for b in stats {
        if let Some(v) = b.congestion_index {
            w += b.trip_count as f64;
            s += v * b.trip_count as f64;
        }
    }
    (w > 0.0).then(|| s / w)
}

/// Groups trips by pickup (day, hour) and averages minutes per mile.
pub fn aggregate_temporal(trips: &[EngineeredTrip]) -> TemporalProfile {
    let mut counts = vec![0usize; BIN_COUNT];
    let mut sums = vec![0.0f64; BIN_COUNT];
    let mut n_index = vec![0usize; BIN_COUNT];
    for t in trips {
        let i = TimeBin {
            day: t.day_of_week,
            hour: t.hour_of_day,
        }
        .index();
        counts[i] += 1;
        if let Some(v) = minutes_per_mile(t) {
            sums[i] += v;
            n_index[i] += 1;
        }
    }
    TemporalProfile {
        bins: (0..BIN_COUNT)
            .map(|i| BinStat {
                trip_count: counts[i],
                congestion_index: (n_index[i] > 0).then(|| sums[i] / n_index[i] as f64),
            })
            .collect(),
    }
}

/// Bins whose index reaches the top `top_q` fraction of present bins, highest
/// first; ties ordered by (day, hour). Ties at the cut-off are all included.
pub fn peak_periods(profile: &TemporalProfile, top_q: f64) -> Vec<TimeBin> {
    let mut present: Vec<(TimeBin, f64)> = profile.present().collect();
    if present.is_empty() {
        return Vec::new();
    }
    present.sort_by(|a, b| b.1.total_cmp(&a.1).then(a.0.cmp(&b.0)));
    let q = top_q.clamp(0.0, 1.0);
    let take = (math::ceil(q * present.len() as f64) as usize).clamp(1, present.len());
    let cutoff = present[take - 1].1;
    present
        .into_iter()
        .take_while(|(_, v)| *v >= cutoff)
        .map(|(b, _)| b)
        .collect()
}

/// Uniform rows × cols tiling of a bbox. Row 0 is the southern edge, column 0
/// the western edge.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GridSpec {
    pub bbox: BBox,
    pub rows: usize,
    pub cols: usize,
}

impl GridSpec {
    pub fn new(bbox: BBox, rows: usize, cols: usize) -> Result<Self, SpatialError> {
        let g = Self { bbox, rows, cols };
        g.validate()?;
        Ok(g)
    }

    pub fn validate(&self) -> Result<(), SpatialError> {
        if self.rows == 0 || self.cols == 0 || !self.bbox.is_valid() {
            return Err(SpatialError::InvalidGrid);
        }
        Ok(())
    }

    pub fn cell_count(&self) -> usize {
        self.rows * self.cols
    }

    /// Southern latitude of row `r` (`r == rows` gives the northern bbox edge).
    pub fn lat_edge(&self, r: usize) -> f64 {
        if r == self.rows {
            return self.bbox.lat_max;
        }
        self.bbox.lat_min + (self.bbox.lat_max - self.bbox.lat_min) * r as f64 / self.rows as f64
    }

    pub fn lon_edge(&self, c: usize) -> f64 {
        if c == self.cols {
            return self.bbox.lon_max;
        }
        self.bbox.lon_min + (self.bbox.lon_max - self.bbox.lon_min) * c as f64 / self.cols as f64
    }

    pub fn cell_center(&self, row: usize, col: usize) -> LatLon {
        LatLon::new(
            (self.lat_edge(row) + self.lat_edge(row + 1)) / 2.0,
            (self.lon_edge(col) + self.lon_edge(col + 1)) / 2.0,
        )
    }

    /// Cell containing `p`, or `None` outside the bbox. A point on an interior
    /// edge belongs to the lower-index cell.
    pub fn cell_of(&self, p: LatLon) -> Option<(usize, usize)> {
        if !self.bbox.contains(p) {
            return None;
        }
        let row = locate(p.lat, self.rows, |i| self.lat_edge(i), self.bbox.lat_min, self.bbox.lat_max);
        let col = locate(p.lon, self.cols, |i| self.lon_edge(i), self.bbox.lon_min, self.bbox.lon_max);
        Some((row, col))
    }

    /// Cell area in square meters under the local projection at the bbox center.
    pub fn cell_area_m2(&self) -> f64 {
        let proj = LocalProjection::new(self.bbox.center());
        let dlat = (self.bbox.lat_max - self.bbox.lat_min) / self.rows as f64;
        let dlon = (self.bbox.lon_max - self.bbox.lon_min) / self.cols as f64;
        dlat * proj.meters_per_deg_lat() * dlon * proj.meters_per_deg_lon()
    }
}

// index i with edge(i) < v <= edge(i+1), except cell 0 which is closed below
fn locate(v: f64, n: usize, edge: impl Fn(usize) -> f64, lo: f64, hi: f64) -> usize {
    let t = (v - lo) / (hi - lo) * n as f64;
    let mut i = (math::ceil(t) as isize - 1).clamp(0, n as isize - 1) as usize;
    while i > 0 && v <= edge(i) {
        i -= 1;
    }
    while i + 1 < n && v > edge(i + 1) {
        i += 1;
    }
    i
}

/// Which bins an aggregation keeps; `None` matches every value.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct BinFilter {
    pub day: Option<u8>,
    pub hour: Option<u8>,
}

impl BinFilter {
    pub fn only(bin: TimeBin) -> Self {
        Self {
            day: Some(bin.day),
            hour: Some(bin.hour),
        }
    }

    pub fn matches(&self, bin: TimeBin) -> bool {
        self.day.is_none_or(|d| d == bin.day) && self.hour.is_none_or(|h| h == bin.hour)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CongestionCell {
    pub row: usize,
    pub col: usize,
    pub bin: TimeBin,
    pub trip_count: usize,
    /// Minutes per mile.
    pub congestion_index: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpatialAggregation {
    pub grid: GridSpec,
    pub filter: BinFilter,
    pub min_support: usize,
    /// Cell-bins with at least `min_support` trips, ordered by (bin, row, col).
    pub cells: Vec<CongestionCell>,
    /// Trips that passed the filter and landed in some cell.
    pub assigned: usize,
    /// Trips that passed the filter but were picked up outside the bbox.
    pub outside: usize,
    /// Trips rejected by the bin filter.
    pub excluded_by_filter: usize,
}

/// Assigns trips to grid cells by pickup point and averages minutes per mile
/// per (bin, cell).
pub fn aggregate_spatial(
    trips: &[EngineeredTrip],
    grid: &GridSpec,
    filter: BinFilter,
    min_support: usize,
) -> Result<SpatialAggregation, SpatialError> {
    grid.validate()?;
    // (bin, row, col) -> (count, index sum, index count)
    let mut acc: BTreeMap<(TimeBin, usize, usize), (usize, f64, usize)> = BTreeMap::new();
    let (mut assigned, mut outside, mut excluded) = (0, 0, 0);
    for t in trips {
        let bin = TimeBin {
            day: t.day_of_week,
            hour: t.hour_of_day,
        };
        if !filter.matches(bin) {
            excluded += 1;
            continue;
        }
        let Some((r, c)) = grid.cell_of(t.record.pickup()) else {
            outside += 1;
            continue;
        };
        assigned += 1;
        let e = acc.entry((bin, r, c)).or_insert((0, 0.0, 0));
        e.0 += 1;
        if let Some(v) = minutes_per_mile(t) {
            e.1 += v;
            e.2 += 1;
        }
    }
    let cells = acc
        .into_iter()
        .filter(|(_, (n, _, ni))| *n >= min_support && *ni > 0)
        .map(|((bin, row, col), (n, s, ni))| CongestionCell {
            row,
            col,
            bin,
            trip_count: n,
            congestion_index: s / ni as f64,
        })
        .collect();
    Ok(SpatialAggregation {
        grid: *grid,
        filter,
        min_support,
        cells,
        assigned,
        outside,
        excluded_by_filter: excluded,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum HeatmapKind {
    Density,
    CongestionIndex,
}

/// Row-major grid of values; `None` marks a cell without data.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Heatmap {
    pub grid: GridSpec,
    pub kind: HeatmapKind,
    pub filter: BinFilter,
    pub values: Vec<Option<f64>>,
}

impl Heatmap {
    pub fn get(&self, row: usize, col: usize) -> Option<f64> {
        self.values[row * self.grid.cols + col]
    }

    pub fn populated(&self) -> usize {
        self.values.iter().filter(|v| v.is_some()).count()
    }

    /// Σ value × cell area; ≈ 1 for a density surface that fits in the bbox.
    pub fn integral(&self) -> f64 {
        self.values.iter().flatten().sum::<f64>() * self.grid.cell_area_m2()
    }
}

/// Congestion heatmap from an aggregation on `grid`. Cells seen in several
/// bins are pooled, weighted by trip count.
pub fn build_heatmap(agg: &SpatialAggregation, grid: &GridSpec) -> Result<Heatmap, SpatialError> {
    if agg.grid != *grid {
        return Err(SpatialError::GridMismatch);
    }
    let mut weight = vec![0.0f64; grid.cell_count()];
    let mut sum = vec![0.0f64; grid.cell_count()];
    for c in &agg.cells {
        let i = c.row * grid.cols + c.col;
        weight[i] += c.trip_count as f64;
        sum[i] += c.congestion_index * c.trip_count as f64;
    }
    Ok(Heatmap {
        grid: *grid,
        kind: HeatmapKind::CongestionIndex,
        filter: agg.filter,
        values: weight
            .iter()
            .zip(&sum)
            .map(|(w, s)| (*w > 0.0).then(|| s / w))
            .collect(),
    })
}

/// Gaussian kernel density (per square meter) at every cell center, using a
/// local equirectangular projection around the bbox center.
pub fn kde(points: &[LatLon], bandwidth_m: f64, grid: &GridSpec) -> Result<Heatmap, SpatialError> {
    grid.validate()?;
    if !(bandwidth_m > 0.0 && bandwidth_m.is_finite()) {
        return Err(SpatialError::BadBandwidth(bandwidth_m));
    }
    if points.is_empty() {
        return Err(SpatialError::NoPoints);
    }
    let proj = LocalProjection::new(grid.bbox.center());
    let projected: Vec<(f64, f64)> = points.iter().map(|p| proj.project(*p)).collect();
    let norm = 1.0 / (2.0 * PI * bandwidth_m * bandwidth_m * points.len() as f64);
    let inv_two_h2 = 1.0 / (2.0 * bandwidth_m * bandwidth_m);

    let mut values = Vec::with_capacity(grid.cell_count());
    for r in 0..grid.rows {
        for c in 0..grid.cols {
            let (cx, cy) = proj.project(grid.cell_center(r, c));
            let s: f64 = projected
                .iter()
                .map(|(x, y)| {
                    let d2 = (x - cx) * (x - cx) + (y - cy) * (y - cy);
                    math::exp(-d2 * inv_two_h2)
                })
                .sum();
            values.push(Some(s * norm));
        }
    }
    Ok(Heatmap {
        grid: *grid,
        kind: HeatmapKind::Density,
        filter: BinFilter::default(),
        values,
    })
}
