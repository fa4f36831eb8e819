//! HTTP JSON API.
//!
//! Routes are computed against the snapshot currently published in the
//! [`SnapshotStore`]. Trip state lives in memory only and is lost on restart.
//! The simulation clock moves only on `POST /api/sim/tick`.

use std::collections::BTreeMap;
use std::net::SocketAddr;
use std::path::Path;
use std::sync::{Arc, Mutex, MutexGuard};

use axum::extract::rejection::JsonRejection;
use axum::extract::{Path as UrlPath, Query, State};
use axum::http::StatusCode;
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};
use urbanflow_core::realtime::{check_deviation, live_eta, DeviationReport, RealtimeError, Scenario, Simulator, TickRecord, TripId};
use urbanflow_core::routing::{compute_route, snap};
use urbanflow_core::spatiotemporal::{
    aggregate_spatial, aggregate_temporal, build_heatmap, peak_periods, BinFilter, BinStat, GridSpec, TimeBin,
};
use urbanflow_core::trips::{normalize, EngineeredTrip, Feature};
use urbanflow_core::{BBox, HeuristicSpec, LatLon, NodeId, RoadGraph, Route, RouteOutcome, TrafficSnapshot};

use crate::config::{parse_grid_dims, ServiceConfig};
use crate::export::to_geojson;
use crate::model_file::DurationModel;
use crate::pipeline::{load_cleaned, load_duration_model, load_graph, load_scenario, PipelineError, DEFAULT_TOP_Q};
use crate::scenario::Point;
use crate::store::SnapshotStore;
use crate::tz::Zone;

/// Stable error codes carried in every error body.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum ErrorCode {
    BadCoordinate,
    BadRequest,
    NoRoute,
    ModelNotLoaded,
    AnalyticsNotBuilt,
    EmptyBin,
    NoScenario,
    NotFound,
    Internal,
}

impl ErrorCode {
    fn status(self) -> StatusCode {
        match self {
            ErrorCode::BadCoordinate | ErrorCode::BadRequest => StatusCode::BAD_REQUEST,
            ErrorCode::NoRoute | ErrorCode::EmptyBin | ErrorCode::NotFound => StatusCode::NOT_FOUND,
            ErrorCode::ModelNotLoaded | ErrorCode::AnalyticsNotBuilt | ErrorCode::NoScenario => StatusCode::CONFLICT,
            ErrorCode::Internal => StatusCode::INTERNAL_SERVER_ERROR,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ApiError {
    pub code: ErrorCode,
    pub message: String,
    #[serde(default)]
    pub details: BTreeMap<String, Value>,
}

impl ApiError {
    pub fn new(code: ErrorCode, message: impl Into<String>) -> Self {
        Self {
            code,
            message: message.into(),
            details: BTreeMap::new(),
        }
    }

    fn with(mut self, key: &str, v: impl Into<Value>) -> Self {
        self.details.insert(key.to_string(), v.into());
        self
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        (self.code.status(), Json(self)).into_response()
    }
}

impl From<JsonRejection> for ApiError {
    fn from(r: JsonRejection) -> Self {
        ApiError::new(ErrorCode::BadRequest, r.body_text())
    }
}

type ApiResult<T> = Result<Json<T>, ApiError>;

/// Trip-level analytics computed once from the cleaned dataset.
pub struct Analytics {
    pub trips: Vec<EngineeredTrip>,
    pub grid: GridSpec,
    pub min_support: usize,
}

struct SimState {
    sim: Simulator,
    /// False until a scenario is configured or posted; ticking needs one.
    loaded: bool,
    next_id: TripId,
}

pub struct AppState {
    graph: Arc<RoadGraph>,
    heuristic: HeuristicSpec,
    store: SnapshotStore,
    threshold: f64,
    duration: Option<DurationModel>,
    analytics: Option<Analytics>,
    sim: Mutex<SimState>,
}

fn fresh_base(store: &SnapshotStore) -> Arc<TrafficSnapshot> {
    let mut base = TrafficSnapshot::free_flow();
    base.version = store.load().version + 1;
    Arc::new(base)
}

fn empty_scenario() -> Scenario {
    Scenario {
        seed: 0,
        poll_interval: urbanflow_core::realtime::DEFAULT_POLL_INTERVAL,
        events: Vec::new(),
    }
}

impl AppState {
    pub fn new(graph: RoadGraph, threshold: f64) -> Self {
        let graph = Arc::new(graph);
        let store = SnapshotStore::default();
        let sim = Simulator::new(Arc::clone(&graph), empty_scenario(), store.load(), threshold, true)
            .expect("empty scenario is valid");
        Self {
            heuristic: HeuristicSpec::haversine_for(&graph),
            graph,
            store,
            threshold,
            duration: None,
            analytics: None,
            sim: Mutex::new(SimState {
                sim,
                loaded: false,
                next_id: 1,
            }),
        }
    }

    pub fn with_duration_model(mut self, m: DurationModel) -> Self {
        self.duration = Some(m);
        self
    }

    pub fn with_analytics(mut self, a: Analytics) -> Self {
        self.analytics = Some(a);
        self
    }

    pub fn with_scenario(self, sc: Scenario) -> Result<Self, RealtimeError> {
        self.start(sc)?;
        Ok(self)
    }

    /// Loads every artifact named in the config. Fails on the first one that
    /// is missing or malformed.
    pub fn from_config(cfg: &ServiceConfig) -> Result<Self, PipelineError> {
        if !(cfg.threshold >= 0.0 && cfg.threshold.is_finite()) {
            return Err(PipelineError::Usage(format!("threshold must be nonnegative, got {}", cfg.threshold)));
        }
        let zone = Zone::parse(&cfg.timezone).map_err(PipelineError::Usage)?;
        let mut state = AppState::new(load_graph(&cfg.graph)?, cfg.threshold);
        if let Some(p) = &cfg.duration_model {
            state = state.with_duration_model(load_duration_model(p)?);
        }
        if let Some(p) = &cfg.data {
            let (rows, cols) = parse_grid_dims(&cfg.grid).map_err(PipelineError::Usage)?;
            state = state.with_analytics(build_analytics(p, &zone, BBox::NYC, rows, cols, cfg.min_support)?);
        }
        if let Some(p) = &cfg.scenario {
            let sc = load_scenario(p)?;
            state = state.with_scenario(sc).map_err(|e| PipelineError::Usage(e.to_string()))?;
        }
        Ok(state)
    }

    pub fn store(&self) -> &SnapshotStore {
        &self.store
    }

    fn lock_sim(&self) -> MutexGuard<'_, SimState> {
        self.sim.lock().unwrap_or_else(|p| p.into_inner())
    }

    /// Replaces the simulation: clock back to zero, trips cleared, traffic back
    /// to free flow under a fresh snapshot version.
    fn start(&self, sc: Scenario) -> Result<(), RealtimeError> {
        let base = fresh_base(&self.store);
        let sim = Simulator::new(Arc::clone(&self.graph), sc, Arc::clone(&base), self.threshold, true)?
            .with_heuristic(self.heuristic);
        let mut st = self.lock_sim();
        st.sim = sim;
        st.loaded = true;
        st.next_id = 1;
        self.store.publish(base);
        Ok(())
    }
}

pub fn build_analytics(
    data: &Path,
    zone: &Zone,
    bbox: BBox,
    rows: usize,
    cols: usize,
    min_support: usize,
) -> Result<Analytics, PipelineError> {
    let trips = load_cleaned(data, zone)?;
    let grid = GridSpec::new(bbox, rows, cols).map_err(|e| PipelineError::Usage(e.to_string()))?;
    Ok(Analytics {
        trips,
        grid,
        min_support,
    })
}

pub fn router(state: Arc<AppState>) -> Router {
    Router::new()
        .route("/api/health", get(health))
        .route("/api/route", post(route_handler))
        .route("/api/predict-duration", post(predict_duration))
        .route("/api/congestion", get(congestion))
        .route("/api/stats/temporal", get(stats_temporal))
        .route("/api/trips", post(create_trip))
        .route("/api/trips/{id}", get(get_trip))
        .route("/api/sim/start", post(sim_start))
        .route("/api/sim/tick", post(sim_tick))
        .fallback(not_found)
        .with_state(state)
}

/// Binds, prints the bound address and serves until ctrl-c.
pub async fn serve(state: AppState, bind: &str) -> std::io::Result<()> {
    let listener = tokio::net::TcpListener::bind(bind).await?;
    let addr: SocketAddr = listener.local_addr()?;
    println!("listening on http://{addr}");
    axum::serve(listener, router(Arc::new(state)))
        .with_graceful_shutdown(async {
            let _ = tokio::signal::ctrl_c().await;
        })
        .await
}

async fn not_found() -> ApiError {
    ApiError::new(ErrorCode::NotFound, "no such endpoint")
}

async fn health(State(st): State<Arc<AppState>>) -> Json<Value> {
    Json(json!({
        "status": "ok",
        "nodes": st.graph.node_count(),
        "edges": st.graph.edge_count(),
        "snapshot_version": st.store.load().version,
        "duration_model": st.duration.is_some(),
        "analytics": st.analytics.is_some(),
    }))
}

// ---------- routing ----------

fn coordinate(body: &Value, key: &str) -> Result<LatLon, ApiError> {
    let obj = body
        .get(key)
        .ok_or_else(|| ApiError::new(ErrorCode::BadCoordinate, format!("missing `{key}`")).with("field", key))?;
    let comp = |c: &str| {
        obj.get(c).and_then(Value::as_f64).ok_or_else(|| {
            ApiError::new(ErrorCode::BadCoordinate, format!("`{key}.{c}` must be a number")).with("field", format!("{key}.{c}"))
        })
    };
    let p = LatLon::new(comp("lat")?, comp("lon")?);
    if !p.is_valid() {
        return Err(ApiError::new(ErrorCode::BadCoordinate, format!("`{key}` is out of range"))
            .with("field", key)
            .with("lat", p.lat)
            .with("lon", p.lon));
    }
    Ok(p)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RouteBody {
    pub geometry: Vec<Point>,
    pub nodes: Vec<NodeId>,
    pub edges: Vec<urbanflow_core::EdgeId>,
    pub cost_sec: f64,
    pub distance_m: f64,
    pub snapshot_version: u64,
}

impl RouteBody {
    fn from_route(r: &Route, g: &RoadGraph) -> Self {
        let geometry = r
            .nodes
            .iter()
            .filter_map(|n| g.node_idx(*n).map(|i| Point::from(g.node(i).pos)))
            .collect();
        Self {
            geometry,
            nodes: r.nodes.clone(),
            edges: r.edges.clone(),
            cost_sec: r.cost_s,
            distance_m: r.distance_m,
            snapshot_version: r.snapshot_version,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RouteResponse {
    #[serde(flatten)]
    pub route: RouteBody,
    pub crow_flight_m: f64,
    pub origin_node: NodeId,
    pub dest_node: NodeId,
    pub origin_snap_m: f64,
    pub dest_snap_m: f64,
}

async fn route_handler(State(st): State<Arc<AppState>>, body: Result<Json<Value>, JsonRejection>) -> ApiResult<RouteResponse> {
    let Json(body) = body?;
    let origin = coordinate(&body, "origin")?;
    let dest = coordinate(&body, "dest")?;
    let snapshot = st.store.load();
    let ans = compute_route(origin, dest, &st.graph, &snapshot, &st.heuristic)
        .ok_or_else(|| ApiError::new(ErrorCode::Internal, "graph has no nodes"))?;
    match &ans.outcome {
        RouteOutcome::Found(r) => Ok(Json(RouteResponse {
            route: RouteBody::from_route(r, &st.graph),
            crow_flight_m: ans.crow_flight_m,
            origin_node: ans.origin_node,
            dest_node: ans.dest_node,
            origin_snap_m: ans.origin_snap_m,
            dest_snap_m: ans.dest_snap_m,
        })),
        RouteOutcome::NoRoute { .. } => Err(ApiError::new(ErrorCode::NoRoute, "destination is not reachable from origin")
            .with("origin_node", ans.origin_node.0)
            .with("dest_node", ans.dest_node.0)),
    }
}

// ---------- duration prediction ----------

fn input_value(body: &Value, f: Feature) -> Result<f64, ApiError> {
    let num = |name: &str| -> Result<f64, ApiError> {
        match body.get(name) {
            None => Err(ApiError::new(ErrorCode::BadRequest, format!("missing field `{name}`")).with("field", name)),
            Some(v) => v
                .as_f64()
                .filter(|x| x.is_finite())
                .ok_or_else(|| ApiError::new(ErrorCode::BadRequest, format!("field `{name}` must be a number")).with("field", name)),
        }
    };
    let int_in = |name: &str, max: u8| -> Result<u8, ApiError> {
        let v = num(name)?;
        if v.fract() != 0.0 || !(0.0..f64::from(max)).contains(&v) {
            return Err(ApiError::new(ErrorCode::BadRequest, format!("field `{name}` must be an integer in 0..{max}")).with("field", name));
        }
        Ok(v as u8)
    };
    Ok(match f {
        Feature::HourOfDay => f64::from(int_in("hour_of_day", 24)?),
        Feature::DayOfWeek => f64::from(int_in("day_of_week", 7)?),
        Feature::DayOneHot(d) => f64::from(u8::from(int_in("day_of_week", 7)? == d)),
        Feature::HourOneHot(h) => f64::from(u8::from(int_in("hour_of_day", 24)? == h)),
        other => num(&other.name())?,
    })
}

/// Scores a raw feature object with a duration model, in minutes.
pub fn predict_minutes(model: &DurationModel, body: &Value) -> Result<f64, ApiError> {
    if !body.is_object() {
        return Err(ApiError::new(ErrorCode::BadRequest, "body must be a JSON object"));
    }
    let x = model
        .features
        .iter()
        .map(|f| input_value(body, *f))
        .collect::<Result<Vec<f64>, ApiError>>()?;
    let z = normalize(&x, &model.norm);
    model.linreg.predict(&z).map_err(|e| {
        ApiError::new(ErrorCode::BadRequest, e.to_string())
            .with("expected", model.linreg.coefficients.len())
            .with("got", z.len())
    })
}

async fn predict_duration(State(st): State<Arc<AppState>>, body: Result<Json<Value>, JsonRejection>) -> ApiResult<Value> {
    let model = st
        .duration
        .as_ref()
        .ok_or_else(|| ApiError::new(ErrorCode::ModelNotLoaded, "no duration model is loaded"))?;
    let Json(body) = body?;
    let minutes = predict_minutes(model, &body)?;
    Ok(Json(json!({
        "duration_min": minutes,
        "features": model.linreg.feature_names,
    })))
}

// ---------- analytics ----------

fn analytics(st: &AppState) -> Result<&Analytics, ApiError> {
    st.analytics
        .as_ref()
        .ok_or_else(|| ApiError::new(ErrorCode::AnalyticsNotBuilt, "no trip data was loaded at startup"))
}

#[derive(Debug, Deserialize)]
struct BinQuery {
    day: Option<String>,
    hour: Option<String>,
}

fn bin_param(v: Option<&str>, name: &str, max: u8) -> Result<u8, ApiError> {
    let raw = v.ok_or_else(|| ApiError::new(ErrorCode::BadRequest, format!("missing query parameter `{name}`")).with("field", name))?;
    raw.parse::<u8>().ok().filter(|x| *x < max).ok_or_else(|| {
        ApiError::new(ErrorCode::BadRequest, format!("`{name}` must be an integer in 0..={}", max - 1))
            .with("field", name)
            .with("value", raw)
    })
}

async fn congestion(State(st): State<Arc<AppState>>, q: Result<Query<BinQuery>, axum::extract::rejection::QueryRejection>) -> ApiResult<Value> {
    let Query(q) = q.map_err(|r| ApiError::new(ErrorCode::BadRequest, r.body_text()))?;
    let day = bin_param(q.day.as_deref(), "day", 7)?;
    let hour = bin_param(q.hour.as_deref(), "hour", 24)?;
    let a = analytics(&st)?;
    let bin = TimeBin { day, hour };
    let agg = aggregate_spatial(&a.trips, &a.grid, BinFilter::only(bin), a.min_support)
        .map_err(|e| ApiError::new(ErrorCode::Internal, e.to_string()))?;
    let hm = build_heatmap(&agg, &a.grid).map_err(|e| ApiError::new(ErrorCode::Internal, e.to_string()))?;
    if hm.populated() == 0 {
        return Err(ApiError::new(ErrorCode::EmptyBin, "no cell has enough trips in this bin")
            .with("day", day)
            .with("hour", hour)
            .with("min_support", a.min_support));
    }
    Ok(Json(to_geojson(&hm)))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TemporalRow {
    pub day: u8,
    pub hour: u8,
    #[serde(flatten)]
    pub stat: BinStat,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TemporalResponse {
    pub bins: Vec<TemporalRow>,
    pub peaks: Vec<TimeBin>,
    pub top_q: f64,
}

async fn stats_temporal(State(st): State<Arc<AppState>>) -> ApiResult<TemporalResponse> {
    let a = analytics(&st)?;
    let profile = aggregate_temporal(&a.trips);
    let peaks = peak_periods(&profile, DEFAULT_TOP_Q);
    let bins = TimeBin::all()
        .map(|b| TemporalRow {
            day: b.day,
            hour: b.hour,
            stat: profile.get(b),
        })
        .collect();
    Ok(Json(TemporalResponse {
        bins,
        peaks,
        top_q: DEFAULT_TOP_Q,
    }))
}

// ---------- trips and simulation ----------

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TripCreated {
    pub trip_id: TripId,
    pub route: RouteBody,
    pub predicted_eta: f64,
    pub started_at: f64,
}

fn realtime_error(e: RealtimeError) -> ApiError {
    match e {
        RealtimeError::NoRoute { from, to } => ApiError::new(ErrorCode::NoRoute, "destination is not reachable from origin")
            .with("origin_node", from.0)
            .with("dest_node", to.0),
        other => ApiError::new(ErrorCode::Internal, other.to_string()),
    }
}

async fn create_trip(State(st): State<Arc<AppState>>, body: Result<Json<Value>, JsonRejection>) -> ApiResult<TripCreated> {
    let Json(body) = body?;
    let origin = coordinate(&body, "origin")?;
    let dest = coordinate(&body, "dest")?;
    let o = snap(origin, &st.graph).ok_or_else(|| ApiError::new(ErrorCode::Internal, "graph has no nodes"))?;
    let d = snap(dest, &st.graph).ok_or_else(|| ApiError::new(ErrorCode::Internal, "graph has no nodes"))?;
    let mut guard = st.lock_sim();
    let s = &mut *guard;
    let id = s.next_id;
    let trip = s.sim.add_trip(id, o, d).map_err(realtime_error)?;
    let created = TripCreated {
        trip_id: id,
        route: RouteBody::from_route(&trip.route, &st.graph),
        predicted_eta: trip.predicted_eta,
        started_at: trip.started_at,
    };
    s.next_id += 1;
    Ok(Json(created))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TripStatus {
    pub trip_id: TripId,
    /// `en_route`, `arrived` or `unreachable`.
    pub status: String,
    pub clock: f64,
    pub current_node: NodeId,
    pub mid_edge: bool,
    pub route: RouteBody,
    pub predicted_eta: f64,
    pub remaining_predicted_s: f64,
    pub remaining_live_s: f64,
    pub started_at: f64,
    pub arrived_at: Option<f64>,
    pub realized_s: Option<f64>,
    pub reroutes: usize,
    /// Latest report from a tick, or one computed now if the trip has not been polled yet.
    pub deviation: DeviationReport,
}

async fn get_trip(State(st): State<Arc<AppState>>, UrlPath(id): UrlPath<String>) -> ApiResult<TripStatus> {
    let not_found = || ApiError::new(ErrorCode::NotFound, format!("no trip `{id}`")).with("trip_id", id.clone());
    let tid: TripId = id.parse().map_err(|_| not_found())?;
    let guard = st.lock_sim();
    let sim = &guard.sim;
    let trip = sim.trip(tid).ok_or_else(not_found)?;
    let snapshot = sim.snapshot();
    let deviation = sim
        .last_report(tid)
        .cloned()
        .unwrap_or_else(|| check_deviation(trip, &st.graph, snapshot, st.threshold));
    let status = if trip.is_arrived() {
        "arrived"
    } else if trip.unreachable_flag {
        "unreachable"
    } else {
        "en_route"
    };
    Ok(Json(TripStatus {
        trip_id: tid,
        status: status.into(),
        clock: sim.clock(),
        current_node: trip.current_node(),
        mid_edge: trip.mid_edge(),
        route: RouteBody::from_route(&trip.route, &st.graph),
        predicted_eta: trip.predicted_eta,
        remaining_predicted_s: trip.predicted_remaining(),
        remaining_live_s: live_eta(trip, &st.graph, snapshot),
        started_at: trip.started_at,
        arrived_at: trip.arrived_at,
        realized_s: trip.realized_time(),
        reroutes: trip.reroutes,
        deviation,
    }))
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct ScenarioJson {
    seed: u64,
    #[serde(default = "default_poll")]
    poll_interval: f64,
    #[serde(default)]
    events: Vec<urbanflow_core::realtime::ScenarioEvent>,
}

fn default_poll() -> f64 {
    urbanflow_core::realtime::DEFAULT_POLL_INTERVAL
}

/// Body: `{"scenario": {...}}` with the scenario as a JSON object, or as TOML
/// text in the scenario file format.
async fn sim_start(State(st): State<Arc<AppState>>, body: Result<Json<Value>, JsonRejection>) -> ApiResult<Value> {
    let Json(body) = body?;
    let raw = body
        .get("scenario")
        .ok_or_else(|| ApiError::new(ErrorCode::BadRequest, "missing field `scenario`").with("field", "scenario"))?;
    let sc = match raw {
        Value::String(text) => crate::scenario::parse_scenario_toml(text)
            .map_err(|e| ApiError::new(ErrorCode::BadRequest, e.to_string()).with("field", "scenario"))?,
        other => {
            let s: ScenarioJson = serde_json::from_value(other.clone())
                .map_err(|e| ApiError::new(ErrorCode::BadRequest, format!("scenario: {e}")).with("field", "scenario"))?;
            Scenario {
                seed: s.seed,
                poll_interval: s.poll_interval,
                events: s.events,
            }
        }
    };
    let n_events = sc.events.len();
    let poll = sc.poll_interval;
    st.start(sc)
        .map_err(|e| ApiError::new(ErrorCode::BadRequest, e.to_string()).with("field", "scenario"))?;
    Ok(Json(json!({
        "clock": 0.0,
        "poll_interval": poll,
        "events": n_events,
        "snapshot_version": st.store.load().version,
    })))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TickResponse {
    #[serde(flatten)]
    pub record: TickRecord,
    /// Clock after the tick.
    pub clock: f64,
    pub events_remaining: usize,
}

async fn sim_tick(State(st): State<Arc<AppState>>) -> ApiResult<TickResponse> {
    let mut guard = st.lock_sim();
    if !guard.loaded {
        return Err(ApiError::new(ErrorCode::NoScenario, "no scenario loaded; POST /api/sim/start first"));
    }
    let record = guard.sim.tick();
    st.store.publish(Arc::clone(guard.sim.snapshot()));
    Ok(Json(TickResponse {
        record,
        clock: guard.sim.clock(),
        events_remaining: guard.sim.events_remaining(),
    }))
}
