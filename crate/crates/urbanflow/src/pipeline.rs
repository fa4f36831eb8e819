//! Batch operations behind the command-line subcommands.
//!
//! Each function takes already-parsed inputs and returns values; the
//! `run_*` wrappers add file IO and classify failures into usage errors
//! (bad flags, missing or malformed inputs) and runtime failures.

use std::fmt::Write as _;
use std::fs;
use std::io::ErrorKind;
use std::path::Path;
use std::sync::Arc;

use serde::{Deserialize, Serialize};
use thiserror::Error;
use urbanflow_core::kmeans::{elbow, KMeansParams};
use urbanflow_core::linreg::{evaluate, linreg_fit, EvalMetrics};
use urbanflow_core::realtime::{run_paired, PairedLog, Scenario, TripRequest};
use urbanflow_core::regimes::cluster_congestion;
use urbanflow_core::routing::{compute_route, snap, RouteAnswer};
use urbanflow_core::spatiotemporal::{
    aggregate_spatial, aggregate_temporal, build_heatmap, kde, peak_periods, BinFilter, GridSpec, Heatmap, TemporalProfile,
    TimeBin,
};
use urbanflow_core::trips::{
    clean_trips, engineer_features, feature_rows, fit_normalizer, normalize, split, CleanConfig, EngineeredTrip, Feature,
};
use urbanflow_core::{HeuristicSpec, LatLon, Matrix, RoadGraph, TrafficSnapshot};

use crate::ingest::{ingest_report, parse_trips, write_trips, ColumnMap, IngestReport};
use crate::model_file::{load_model, save_model, CongestionModel, DurationModel, ModelPayload};
use crate::scenario::{parse_scenario_toml, parse_trips_json, read_feed, TripSpec};
use crate::tz::Zone;

/// Failure of a pipeline step, split by the exit code it maps to.
#[derive(Debug, Error)]
pub enum PipelineError {
    /// Bad flags, unreadable or malformed inputs (exit 2).
    #[error("{0}")]
    Usage(String),
    /// The inputs were fine but the work failed (exit 1).
    #[error("{0}")]
    Runtime(String),
}

impl PipelineError {
    pub fn exit_code(&self) -> i32 {
        match self {
            PipelineError::Usage(_) => 2,
            PipelineError::Runtime(_) => 1,
        }
    }
}

type Result<T> = std::result::Result<T, PipelineError>;

fn usage(m: impl Into<String>) -> PipelineError {
    PipelineError::Usage(m.into())
}

fn runtime(m: impl Into<String>) -> PipelineError {
    PipelineError::Runtime(m.into())
}

pub fn read_input(path: &Path) -> Result<Vec<u8>> {
    fs::read(path).map_err(|e| match e.kind() {
        ErrorKind::NotFound => usage(format!("{}: no such file", path.display())),
        _ => usage(format!("{}: {e}", path.display())),
    })
}

fn read_text(path: &Path) -> Result<String> {
    String::from_utf8(read_input(path)?).map_err(|_| usage(format!("{}: not UTF-8", path.display())))
}

pub fn write_output(path: &Path, bytes: &[u8]) -> Result<()> {
    fs::write(path, bytes).map_err(|e| runtime(format!("cannot write {}: {e}", path.display())))
}

fn to_json_bytes<T: Serialize>(v: &T) -> Vec<u8> {
    let mut s = serde_json::to_string_pretty(v).expect("serializable");
    s.push('\n');
    s.into_bytes()
}

// ---------- ingest ----------

pub struct IngestOutput {
    pub cleaned: Vec<EngineeredTrip>,
    pub report: IngestReport,
}

/// parse → clean → engineer.
pub fn ingest_bytes(src: &[u8], columns: &ColumnMap, cfg: &CleanConfig, zone: &Zone) -> Result<IngestOutput> {
    cfg.validate().map_err(|e| usage(e.to_string()))?;
    let parsed = parse_trips(src, columns, zone).map_err(|e| usage(e.to_string()))?;
    let (kept, clean) = clean_trips(&parsed.records, cfg);
    let report = ingest_report(&parsed, clean);
    let cleaned = kept.iter().map(|r| engineer_features(r, zone)).collect();
    Ok(IngestOutput { cleaned, report })
}

pub fn run_ingest(input: &Path, out: &Path, report: &Path, columns: &ColumnMap, cfg: &CleanConfig, zone: &Zone) -> Result<IngestReport> {
    let src = read_input(input)?;
    let res = ingest_bytes(&src, columns, cfg, zone)?;
    let records: Vec<_> = res.cleaned.iter().map(|t| t.record.clone()).collect();
    let mut buf = Vec::new();
    write_trips(&mut buf, &records, zone).map_err(|e| runtime(e.to_string()))?;
    write_output(out, &buf)?;
    write_output(report, &to_json_bytes(&res.report))?;
    Ok(res.report)
}

/// Reads a cleaned trip file. Any unreadable row is an error since the file
/// is expected to come from `ingest`.
pub fn load_cleaned(path: &Path, zone: &Zone) -> Result<Vec<EngineeredTrip>> {
    let src = read_input(path)?;
    let parsed = parse_trips(&src[..], &ColumnMap::default(), zone).map_err(|e| usage(format!("{}: {e}", path.display())))?;
    if let Some(e) = parsed.errors.first() {
        return Err(usage(format!(
            "{}: line {}: {} ({} bad rows; run ingest first)",
            path.display(),
            e.line,
            e.message,
            parsed.errors.len()
        )));
    }
    Ok(parsed.records.iter().map(|r| engineer_features(r, zone)).collect())
}

// ---------- duration model ----------

#[derive(Debug, Clone)]
pub struct DurationOptions {
    pub split_ratio: f64,
    pub seed: u64,
    /// Adds day-of-week and hour one-hot columns.
    pub temporal: bool,
}

impl Default for DurationOptions {
    fn default() -> Self {
        Self {
            split_ratio: 0.8,
            seed: 42,
            temporal: false,
        }
    }
}

/// Metrics file contents. Errors are in minutes.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DurationMetrics {
    pub mae: f64,
    pub rmse: f64,
    pub m: usize,
    /// RMSE of always predicting the training-set mean duration.
    pub baseline_rmse: f64,
    pub features: Vec<String>,
    pub train_rows: usize,
    pub seed: u64,
    pub split_ratio: f64,
    pub ridge_epsilon: f64,
}

fn is_constant(rows: &[Vec<f64>], j: usize) -> bool {
    rows.iter().all(|r| r[j] == rows[0][j])
}

/// Chooses the columns to fit. Columns that never vary in training are
/// dropped, and each one-hot group also loses one reference column, so the
/// design stays full rank.
fn select_features(train: &[EngineeredTrip], temporal: bool) -> Vec<Feature> {
    let all = Feature::duration_features(temporal);
    let rows = feature_rows(train, &all);
    let mut keep = Vec::new();
    let mut seen_day = false;
    let mut seen_hour = false;
    for (j, f) in all.iter().enumerate() {
        if !rows.is_empty() && is_constant(&rows, j) {
            continue;
        }
        match f {
            Feature::DayOneHot(_) | Feature::HourOneHot(_) => {
                let seen = if matches!(f, Feature::DayOneHot(_)) { &mut seen_day } else { &mut seen_hour };
                if !*seen {
                    *seen = true;
                    continue;
                }
                keep.push(*f);
            }
            _ => keep.push(*f),
        }
    }
    keep
}

pub fn train_duration(trips: &[EngineeredTrip], opts: &DurationOptions, zone: &Zone) -> Result<(DurationModel, DurationMetrics)> {
    let parts = split(trips, opts.split_ratio, opts.seed).map_err(|e| usage(e.to_string()))?;
    if parts.test.is_empty() {
        return Err(usage("test split is empty; use more rows or a smaller --split"));
    }
    let features = select_features(&parts.train, opts.temporal);
    if features.is_empty() {
        return Err(usage("every feature is constant in the training split"));
    }
    let names: Vec<String> = features.iter().map(|f| f.name()).collect();
    let raw_train = feature_rows(&parts.train, &features);
    let norm = fit_normalizer(&raw_train, &names).map_err(|e| runtime(e.to_string()))?;
    let scaled: Vec<Vec<f64>> = raw_train.iter().map(|r| normalize(r, &norm)).collect();
    let x = Matrix::from_rows(&scaled).ok_or_else(|| runtime("empty training design"))?;
    let y: Vec<f64> = parts.train.iter().map(|t| Feature::DurationMinutes.value(t)).collect();
    let linreg = linreg_fit(&x, &y, &names).map_err(|e| runtime(e.to_string()))?;

    let raw_test = feature_rows(&parts.test, &features);
    let scaled_test: Vec<Vec<f64>> = raw_test.iter().map(|r| normalize(r, &norm)).collect();
    let xt = Matrix::from_rows(&scaled_test).ok_or_else(|| runtime("empty test design"))?;
    let yt: Vec<f64> = parts.test.iter().map(|t| Feature::DurationMinutes.value(t)).collect();
    let yhat = linreg.predict_batch(&xt).map_err(|e| runtime(e.to_string()))?;
    let metrics: EvalMetrics = evaluate(&yt, &yhat).map_err(|e| runtime(e.to_string()))?;
    let mean_y = y.iter().sum::<f64>() / y.len() as f64;
    let base = evaluate(&yt, &vec![mean_y; yt.len()]).map_err(|e| runtime(e.to_string()))?;

    let report = DurationMetrics {
        mae: metrics.mae,
        rmse: metrics.rmse,
        m: metrics.m,
        baseline_rmse: base.rmse,
        features: names,
        train_rows: parts.train.len(),
        seed: opts.seed,
        split_ratio: opts.split_ratio,
        ridge_epsilon: linreg.ridge_epsilon,
    };
    let model = DurationModel {
        features,
        norm,
        linreg,
        seed: opts.seed,
        split_ratio: opts.split_ratio,
        train_rows: parts.train.len(),
        test_metrics: Some(metrics),
        timezone: zone.name().to_string(),
    };
    Ok((model, report))
}

pub fn run_train_duration(data: &Path, out: &Path, metrics: &Path, opts: &DurationOptions, zone: &Zone) -> Result<DurationMetrics> {
    let trips = load_cleaned(data, zone)?;
    let (model, report) = train_duration(&trips, opts, zone)?;
    write_output(out, &save_model(&ModelPayload::Duration(model)))?;
    write_output(metrics, &to_json_bytes(&report))?;
    Ok(report)
}

pub fn load_duration_model(path: &Path) -> Result<DurationModel> {
    match load_model(&read_input(path)?).map_err(|e| usage(format!("{}: {e}", path.display())))? {
        ModelPayload::Duration(m) => Ok(m),
        other => Err(usage(format!("{}: expected a duration model, found {}", path.display(), other.kind()))),
    }
}

// ---------- congestion regimes ----------

#[derive(Debug, Clone)]
pub struct CongestionOptions {
    pub k: usize,
    pub seed: u64,
    pub grid: GridSpec,
    pub min_support: usize,
    pub restarts: usize,
    pub k_max: usize,
}

pub const ELBOW_K_MAX: usize = 10;
pub const ELBOW_RESTARTS: usize = 10;

pub fn train_congestion(trips: &[EngineeredTrip], opts: &CongestionOptions, zone: &Zone) -> Result<(CongestionModel, Vec<(usize, f64)>)> {
    let agg = aggregate_spatial(trips, &opts.grid, BinFilter::default(), opts.min_support).map_err(|e| usage(e.to_string()))?;
    if agg.cells.is_empty() {
        return Err(runtime(format!(
            "no grid cell reaches min support {} ({} trips assigned)",
            opts.min_support, agg.assigned
        )));
    }
    let params = KMeansParams::default();
    let regimes = cluster_congestion(&agg.cells, opts.k, opts.seed, &params, opts.restarts).map_err(|e| runtime(e.to_string()))?;
    let scaled: Vec<Vec<f64>> = agg
        .cells
        .iter()
        .map(|c| normalize(&[c.congestion_index, f64::from(c.bin.hour), f64::from(c.bin.day)], &regimes.scaler))
        .collect();
    let points = Matrix::from_rows(&scaled).ok_or_else(|| runtime("no cells"))?;
    let table = elbow(&points, opts.k_max, &params, opts.seed, ELBOW_RESTARTS).map_err(|e| runtime(e.to_string()))?;
    let model = CongestionModel {
        regimes,
        grid: opts.grid,
        min_support: opts.min_support,
        seed: opts.seed,
        restarts: opts.restarts,
        params,
        timezone: zone.name().to_string(),
    };
    Ok((model, table))
}

pub fn elbow_csv(table: &[(usize, f64)]) -> String {
    let mut s = String::from("k,inertia\n");
    for (k, v) in table {
        writeln!(s, "{k},{v:?}").expect("write to string");
    }
    s
}

pub fn run_train_congestion(
    data: &Path,
    out: &Path,
    elbow_out: Option<&Path>,
    opts: &CongestionOptions,
    zone: &Zone,
) -> Result<(CongestionModel, Vec<(usize, f64)>)> {
    let trips = load_cleaned(data, zone)?;
    let (model, table) = train_congestion(&trips, opts, zone)?;
    write_output(out, &save_model(&ModelPayload::Congestion(model.clone())))?;
    if let Some(p) = elbow_out {
        write_output(p, elbow_csv(&table).as_bytes())?;
    }
    Ok((model, table))
}

// ---------- heatmaps and temporal analysis ----------

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum HeatmapSource {
    Congestion { min_support: usize },
    Density { bandwidth_m: f64 },
}

pub fn heatmap(trips: &[EngineeredTrip], grid: &GridSpec, filter: BinFilter, source: HeatmapSource) -> Result<Heatmap> {
    match source {
        HeatmapSource::Congestion { min_support } => {
            let agg = aggregate_spatial(trips, grid, filter, min_support).map_err(|e| usage(e.to_string()))?;
            build_heatmap(&agg, grid).map_err(|e| runtime(e.to_string()))
        }
        HeatmapSource::Density { bandwidth_m } => {
            let pts: Vec<LatLon> = trips
                .iter()
                .filter(|t| {
                    filter.matches(TimeBin {
                        day: t.day_of_week,
                        hour: t.hour_of_day,
                    })
                })
                .map(|t| t.record.pickup())
                .collect();
            kde(&pts, bandwidth_m, grid).map_err(|e| usage(e.to_string()))
        }
    }
}

pub const DEFAULT_TOP_Q: f64 = 0.15;

pub struct TemporalAnalysis {
    pub profile: TemporalProfile,
    pub peaks: Vec<TimeBin>,
}

pub fn analyze_temporal(trips: &[EngineeredTrip], top_q: f64) -> TemporalAnalysis {
    let profile = aggregate_temporal(trips);
    let peaks = peak_periods(&profile, top_q);
    TemporalAnalysis { profile, peaks }
}

/// One row per bin that saw at least one trip, in (day, hour) order.
pub fn bins_csv(a: &TemporalAnalysis) -> String {
    let mut s = String::from("day,hour,trip_count,congestion_index,peak\n");
    for bin in TimeBin::all() {
        let st = a.profile.get(bin);
        if st.trip_count == 0 {
            continue;
        }
        let idx = st.congestion_index.map(|v| format!("{v:?}")).unwrap_or_default();
        let peak = u8::from(a.peaks.contains(&bin));
        writeln!(s, "{},{},{},{idx},{peak}", bin.day, bin.hour, st.trip_count).expect("write to string");
    }
    s
}

// ---------- routing and simulation ----------

pub fn load_graph(path: &Path) -> Result<RoadGraph> {
    RoadGraph::parse(&read_text(path)?).map_err(|e| usage(format!("{}: {e}", path.display())))
}

pub fn load_scenario(path: &Path) -> Result<Scenario> {
    parse_scenario_toml(&read_text(path)?).map_err(|e| usage(format!("{}: {e}", path.display())))
}

pub fn load_feed(path: &Path) -> Result<TrafficSnapshot> {
    let text = read_input(path)?;
    let updates = read_feed(&text[..]).map_err(|e| usage(format!("{}: {e}", path.display())))?;
    Ok(TrafficSnapshot::free_flow().apply_updates(&updates).0)
}

pub fn route(graph: &RoadGraph, from: LatLon, to: LatLon, snapshot: &TrafficSnapshot) -> Result<RouteAnswer> {
    let h = HeuristicSpec::haversine_for(graph);
    compute_route(from, to, graph, snapshot, &h).ok_or_else(|| usage("graph has no nodes"))
}

/// Snaps each trip's endpoints to graph nodes and runs the paired simulation.
pub fn simulate(graph: RoadGraph, scenario: &Scenario, trips: &[TripSpec], threshold: f64) -> Result<PairedLog> {
    if !(threshold >= 0.0 && threshold.is_finite()) {
        return Err(usage(format!("threshold must be a nonnegative number, got {threshold}")));
    }
    let requests: Vec<TripRequest> = trips
        .iter()
        .map(|t| {
            Ok(TripRequest {
                id: t.id,
                origin: snap(t.origin.into(), &graph).ok_or_else(|| usage("graph has no nodes"))?,
                destination: snap(t.dest.into(), &graph).ok_or_else(|| usage("graph has no nodes"))?,
            })
        })
        .collect::<Result<_>>()?;
    let h = HeuristicSpec::haversine_for(&graph);
    run_paired(scenario, Arc::new(graph), &requests, threshold, &h).map_err(|e| runtime(e.to_string()))
}

pub fn run_simulate(graph: &Path, scenario: &Path, trips: &Path, out: &Path, threshold: f64) -> Result<PairedLog> {
    let g = load_graph(graph)?;
    let sc = load_scenario(scenario)?;
    let specs = parse_trips_json(&read_text(trips)?).map_err(|e| usage(format!("{}: {e}", trips.display())))?;
    let log = simulate(g, &sc, &specs, threshold)?;
    write_output(out, &to_json_bytes(&log))?;
    Ok(log)
}
