//! Trip records: validation, outlier cleaning, temporal feature engineering,
//! z-score normalization, gap interpolation and train/test splitting.

use alloc::collections::BTreeMap;
use alloc::string::{String, ToString};
use alloc::vec::Vec;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geo::{BBox, LatLon};
use crate::math;

/// One taxi trip. Timestamps are UTC seconds since the Unix epoch.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TripRecord {
    pub pickup_time: i64,
    pub dropoff_time: i64,
    pub pickup_lat: f64,
    pub pickup_lon: f64,
    pub dropoff_lat: f64,
    pub dropoff_lon: f64,
    /// Miles.
    pub trip_distance: f64,
    pub passenger_count: u32,
    /// USD; carried through, never modeled.
    pub fare_amount: f64,
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum TripError {
    #[error("{field} out of range: {value}")]
    OutOfRange { field: &'static str, value: f64 },
    #[error("dropoff precedes pickup")]
    TimeOrder,
    #[error("invalid clean config: {0}")]
    InvalidConfig(&'static str),
    #[error("series needs at least two entries with both endpoints present")]
    CannotAnchor,
    #[error("feature `{feature}` has zero variance")]
    ZeroVariance { feature: String },
    #[error("need at least {needed} rows, got {got}")]
    NotEnoughRows { needed: usize, got: usize },
    #[error("split ratio must lie strictly between 0 and 1, got {0}")]
    BadRatio(f64),
    #[error("cannot split an empty dataset")]
    EmptyInput,
    #[error("unknown feature `{0}`")]
    UnknownFeature(String),
}

impl TripRecord {
    pub fn pickup(&self) -> LatLon {
        LatLon::new(self.pickup_lat, self.pickup_lon)
    }

    pub fn dropoff(&self) -> LatLon {
        LatLon::new(self.dropoff_lat, self.dropoff_lon)
    }

    pub fn duration_sec(&self) -> i64 {
        self.dropoff_time - self.pickup_time
    }

    /// Checks the field-range invariants.
    pub fn validate(&self) -> Result<(), TripError> {
        let ranges: [(&'static str, f64, f64, f64); 4] = [
            ("pickup_latitude", self.pickup_lat, -90.0, 90.0),
            ("pickup_longitude", self.pickup_lon, -180.0, 180.0),
            ("dropoff_latitude", self.dropoff_lat, -90.0, 90.0),
            ("dropoff_longitude", self.dropoff_lon, -180.0, 180.0),
        ];
        for (field, v, lo, hi) in ranges {
            if !(v >= lo && v <= hi) {
                return Err(TripError::OutOfRange { field, value: v });
            }
        }
        if !(self.trip_distance >= 0.0 && self.trip_distance.is_finite()) {
            return Err(TripError::OutOfRange {
                field: "trip_distance",
                value: self.trip_distance,
            });
        }
        if self.passenger_count < 1 {
            return Err(TripError::OutOfRange {
                field: "passenger_count",
                value: self.passenger_count as f64,
            });
        }
        if !(self.fare_amount >= 0.0 && self.fare_amount.is_finite()) {
            return Err(TripError::OutOfRange {
                field: "fare_amount",
                value: self.fare_amount,
            });
        }
        if self.dropoff_time < self.pickup_time {
            return Err(TripError::TimeOrder);
        }
        Ok(())
    }
}

/// Outlier bounds. All closed intervals.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CleanConfig {
    pub bbox: BBox,
    pub max_speed_mph: f64,
    pub min_duration_s: f64,
    pub max_duration_s: f64,
    pub max_distance_mi: f64,
    /// Trips shorter than this cannot yield a minutes-per-mile figure.
    pub min_distance_mi: f64,
}

impl Default for CleanConfig {
    fn default() -> Self {
        Self {
            bbox: BBox::NYC,
            max_speed_mph: 60.0,
            min_duration_s: 60.0,
            max_duration_s: 4.0 * 3600.0,
            max_distance_mi: 100.0,
            min_distance_mi: 0.1,
        }
    }
}

impl CleanConfig {
    pub fn validate(&self) -> Result<(), TripError> {
        if !self.bbox.is_valid() {
            return Err(TripError::InvalidConfig("bbox must be non-degenerate"));
        }
        let bounds = [
            self.max_speed_mph,
            self.min_duration_s,
            self.max_duration_s,
            self.max_distance_mi,
            self.min_distance_mi,
        ];
        if !bounds.iter().all(|b| *b > 0.0 && b.is_finite()) {
            return Err(TripError::InvalidConfig("all bounds must be strictly positive"));
        }
        if self.min_duration_s > self.max_duration_s || self.min_distance_mi > self.max_distance_mi {
            return Err(TripError::InvalidConfig("lower bound exceeds upper bound"));
        }
        Ok(())
    }
}

/// Cleaning rules in the order they are evaluated. A dropped row is charged
/// to the first rule it fails.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub enum CleanRule {
    OutsideBbox,
    Speed,
    DurationShort,
    DurationLong,
    DistanceLong,
    DistanceShort,
}

impl CleanRule {
    pub const ALL: [CleanRule; 6] = [
        CleanRule::OutsideBbox,
        CleanRule::Speed,
        CleanRule::DurationShort,
        CleanRule::DurationLong,
        CleanRule::DistanceLong,
        CleanRule::DistanceShort,
    ];

    pub fn name(self) -> &'static str {
        match self {
            CleanRule::OutsideBbox => "outside_bbox",
            CleanRule::Speed => "speed",
            CleanRule::DurationShort => "duration_short",
            CleanRule::DurationLong => "duration_long",
            CleanRule::DistanceLong => "distance_long",
            CleanRule::DistanceShort => "distance_short",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct CleanReport {
    pub rows_in: usize,
    pub rows_out: usize,
    pub dropped_by_rule: BTreeMap<String, usize>,
    pub imputed_values: usize,
}

impl CleanReport {
    pub fn dropped(&self) -> usize {
        self.dropped_by_rule.values().sum()
    }

    /// Combines reports from disjoint batches.
    pub fn merge(&mut self, other: &CleanReport) {
        self.rows_in += other.rows_in;
        self.rows_out += other.rows_out;
        self.imputed_values += other.imputed_values;
        for (k, v) in &other.dropped_by_rule {
            *self.dropped_by_rule.entry(k.clone()).or_insert(0) += v;
        }
    }
}

/// First rule `r` fails under `cfg`, if any.
pub fn failed_rule(r: &TripRecord, cfg: &CleanConfig) -> Option<CleanRule> {
    if !cfg.bbox.contains(r.pickup()) || !cfg.bbox.contains(r.dropoff()) {
        return Some(CleanRule::OutsideBbox);
    }
    let duration = r.duration_sec() as f64;
    // distance > speed × hours, written without dividing by a zero duration
    if r.trip_distance > cfg.max_speed_mph * duration / 3600.0 {
        return Some(CleanRule::Speed);
    }
    if duration < cfg.min_duration_s {
        return Some(CleanRule::DurationShort);
    }
    if duration > cfg.max_duration_s {
        return Some(CleanRule::DurationLong);
    }
    if r.trip_distance > cfg.max_distance_mi {
        return Some(CleanRule::DistanceLong);
    }
    if r.trip_distance < cfg.min_distance_mi {
        return Some(CleanRule::DistanceShort);
    }
    None
}

/// Filters outliers. Every input row is either kept or charged to one rule.
pub fn clean_trips(records: &[TripRecord], cfg: &CleanConfig) -> (Vec<TripRecord>, CleanReport) {
    let mut report = CleanReport {
        rows_in: records.len(),
        dropped_by_rule: CleanRule::ALL.iter().map(|r| (r.name().to_string(), 0)).collect(),
        ..CleanReport::default()
    };
    let kept: Vec<TripRecord> = records
        .iter()
        .filter(|r| match failed_rule(r, cfg) {
            Some(rule) => {
                *report.dropped_by_rule.get_mut(rule.name()).expect("rule seeded") += 1;
                false
            }
            None => true,
        })
        .cloned()
        .collect();
    report.rows_out = kept.len();
    (kept, report)
}

/// Offset from UTC for a given instant, so calendar fields can be computed in
/// local time without this crate carrying a time-zone database.
pub trait TimeZoneRule {
    fn utc_offset_seconds(&self, utc_seconds: i64) -> i32;
}

/// Constant offset, e.g. `FixedOffset(-5 * 3600)` for EST.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct FixedOffset(pub i32);

impl TimeZoneRule for FixedOffset {
    fn utc_offset_seconds(&self, _utc_seconds: i64) -> i32 {
        self.0
    }
}

/// (day of week with Monday = 0, hour of day) for a UTC instant in `tz`.
pub fn local_day_hour(utc_seconds: i64, tz: &impl TimeZoneRule) -> (u8, u8) {
    let local = utc_seconds + i64::from(tz.utc_offset_seconds(utc_seconds));
    let days = local.div_euclid(86_400);
    let secs = local.rem_euclid(86_400);
    // 1970-01-01 was a Thursday
    let dow = (days + 3).rem_euclid(7) as u8;
    (dow, (secs / 3600) as u8)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EngineeredTrip {
    pub record: TripRecord,
    pub duration_sec: i64,
    pub hour_of_day: u8,
    /// Monday = 0.
    pub day_of_week: u8,
    pub day_onehot: [u8; 7],
    /// Filled by [`normalize`] once statistics have been fitted.
    pub normalized_features: Vec<f64>,
}

pub fn engineer_features(record: &TripRecord, tz: &impl TimeZoneRule) -> EngineeredTrip {
    let (dow, hour) = local_day_hour(record.pickup_time, tz);
    let mut onehot = [0u8; 7];
    onehot[dow as usize] = 1;
    EngineeredTrip {
        record: record.clone(),
        duration_sec: record.duration_sec(),
        hour_of_day: hour,
        day_of_week: dow,
        day_onehot: onehot,
        normalized_features: Vec::new(),
    }
}

/// Named numeric columns that models can be trained on.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Feature {
    TripDistance,
    PickupLongitude,
    PickupLatitude,
    DropoffLongitude,
    DropoffLatitude,
    PassengerCount,
    HourOfDay,
    DayOfWeek,
    DayOneHot(u8),
    HourOneHot(u8),
    DurationMinutes,
}

impl Feature {
    /// The six inputs of the trip-duration model.
    pub const DURATION_BASE: [Feature; 6] = [
        Feature::TripDistance,
        Feature::PickupLongitude,
        Feature::PickupLatitude,
        Feature::DropoffLongitude,
        Feature::DropoffLatitude,
        Feature::PassengerCount,
    ];

    /// Base inputs, optionally followed by day-of-week and hour one-hot columns.
    pub fn duration_features(temporal: bool) -> Vec<Feature> {
        let mut v: Vec<Feature> = Self::DURATION_BASE.to_vec();
        if temporal {
            v.extend((0..7).map(Feature::DayOneHot));
            v.extend((0..24).map(Feature::HourOneHot));
        }
        v
    }

    pub fn name(self) -> String {
        match self {
            Feature::TripDistance => "trip_distance".into(),
            Feature::PickupLongitude => "pickup_longitude".into(),
            Feature::PickupLatitude => "pickup_latitude".into(),
            Feature::DropoffLongitude => "dropoff_longitude".into(),
            Feature::DropoffLatitude => "dropoff_latitude".into(),
            Feature::PassengerCount => "passenger_count".into(),
            Feature::HourOfDay => "hour_of_day".into(),
            Feature::DayOfWeek => "day_of_week".into(),
            Feature::DayOneHot(d) => alloc::format!("dow_{d}"),
            Feature::HourOneHot(h) => alloc::format!("hour_{h}"),
            Feature::DurationMinutes => "duration_min".into(),
        }
    }

    pub fn parse(name: &str) -> Result<Feature, TripError> {
        let simple = [
            Feature::TripDistance,
            Feature::PickupLongitude,
            Feature::PickupLatitude,
            Feature::DropoffLongitude,
            Feature::DropoffLatitude,
            Feature::PassengerCount,
            Feature::HourOfDay,
            Feature::DayOfWeek,
            Feature::DurationMinutes,
        ];
        if let Some(f) = simple.iter().find(|f| f.name() == name) {
            return Ok(*f);
        }
        let indexed = |prefix: &str, max: u8| -> Option<u8> {
            name.strip_prefix(prefix)?.parse::<u8>().ok().filter(|v| *v < max)
        };
        if let Some(d) = indexed("dow_", 7) {
            return Ok(Feature::DayOneHot(d));
        }
        if let Some(h) = indexed("hour_", 24) {
            return Ok(Feature::HourOneHot(h));
        }
        Err(TripError::UnknownFeature(name.to_string()))
    }

    pub fn value(self, t: &EngineeredTrip) -> f64 {
        let r = &t.record;
        match self {
            Feature::TripDistance => r.trip_distance,
            Feature::PickupLongitude => r.pickup_lon,
            Feature::PickupLatitude => r.pickup_lat,
            Feature::DropoffLongitude => r.dropoff_lon,
            Feature::DropoffLatitude => r.dropoff_lat,
            Feature::PassengerCount => f64::from(r.passenger_count),
            Feature::HourOfDay => f64::from(t.hour_of_day),
            Feature::DayOfWeek => f64::from(t.day_of_week),
            Feature::DayOneHot(d) => f64::from(u8::from(t.day_of_week == d)),
            Feature::HourOneHot(h) => f64::from(u8::from(t.hour_of_day == h)),
            Feature::DurationMinutes => t.duration_sec as f64 / 60.0,
        }
    }
}

/// Extracts `features` from each trip into row vectors.
pub fn feature_rows(trips: &[EngineeredTrip], features: &[Feature]) -> Vec<Vec<f64>> {
    trips
        .iter()
        .map(|t| features.iter().map(|f| f.value(t)).collect())
        .collect()
}

/// Per-feature mean and population standard deviation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NormStats {
    pub names: Vec<String>,
    pub mean: Vec<f64>,
    pub std: Vec<f64>,
}

impl NormStats {
    /// Mean 0, std 1 for every named column.
    pub fn identity(names: Vec<String>) -> Self {
        let n = names.len();
        Self {
            names,
            mean: alloc::vec![0.0; n],
            std: alloc::vec![1.0; n],
        }
    }
}

/// Fits z-score statistics column by column over `rows`.
pub fn fit_normalizer<R: AsRef<[f64]>>(rows: &[R], names: &[String]) -> Result<NormStats, TripError> {
    if rows.len() < 2 {
        return Err(TripError::NotEnoughRows {
            needed: 2,
            got: rows.len(),
        });
    }
    let m = rows.len() as f64;
    let mut mean = Vec::with_capacity(names.len());
    let mut std = Vec::with_capacity(names.len());
    for (j, name) in names.iter().enumerate() {
        let mu = rows.iter().map(|r| r.as_ref()[j]).sum::<f64>() / m;
        // two-pass variance
        let var = rows
            .iter()
            .map(|r| {
                let d = r.as_ref()[j] - mu;
                d * d
            })
            .sum::<f64>()
            / m;
        let sd = math::sqrt(var);
        if !(sd > 0.0) {
            return Err(TripError::ZeroVariance {
                feature: name.clone(),
            });
        }
        mean.push(mu);
        std.push(sd);
    }
    Ok(NormStats {
        names: names.to_vec(),
        mean,
        std,
    })
}

/// `(x − mean) / std` per component.
pub fn normalize(x: &[f64], stats: &NormStats) -> Vec<f64> {
    x.iter()
        .zip(stats.mean.iter().zip(&stats.std))
        .map(|(v, (m, s))| (v - m) / s)
        .collect()
}

/// Fills gaps by linear interpolation between the nearest present neighbours.
/// Returns the filled series and the number of values imputed.
pub fn impute_missing(series: &[Option<f64>]) -> Result<(Vec<f64>, usize), TripError> {
    if series.len() < 2 || series[0].is_none() || series[series.len() - 1].is_none() {
        return Err(TripError::CannotAnchor);
    }
    let mut out = Vec::with_capacity(series.len());
    let mut imputed = 0;
    let mut last_present = 0usize;
    for (i, v) in series.iter().enumerate() {
        match v {
            Some(x) => {
                out.push(*x);
                last_present = i;
            }
            None => {
                let next = (i + 1..series.len())
                    .find(|&j| series[j].is_some())
                    .expect("last entry is present");
                let (a, b) = (out[last_present], series[next].expect("found present"));
                let t = (i - last_present) as f64 / (next - last_present) as f64;
                out.push(a + (b - a) * t);
                imputed += 1;
            }
        }
    }
    Ok((out, imputed))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetSplit<T> {
    pub train: Vec<T>,
    pub test: Vec<T>,
    pub ratio: f64,
    pub seed: u64,
}

/// Seeded shuffle, then the first `round(ratio · n)` items go to training.
pub fn split<T: Clone>(items: &[T], ratio: f64, seed: u64) -> Result<DatasetSplit<T>, TripError> {
    if !(ratio > 0.0 && ratio < 1.0) {
        return Err(TripError::BadRatio(ratio));
    }
    if items.is_empty() {
        return Err(TripError::EmptyInput);
    }
    let mut idx: Vec<usize> = (0..items.len()).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    idx.shuffle(&mut rng);
    let n_train = math::round(ratio * items.len() as f64) as usize;
    let (tr, te) = idx.split_at(n_train.min(items.len()));
    Ok(DatasetSplit {
        train: tr.iter().map(|&i| items[i].clone()).collect(),
        test: te.iter().map(|&i| items[i].clone()).collect(),
        ratio,
        seed,
    })
}

/// Fraction of rows in the training part.
pub fn split_ratio_of<T>(s: &DatasetSplit<T>) -> f64 {
    s.train.len() as f64 / (s.train.len() + s.test.len()) as f64
}
