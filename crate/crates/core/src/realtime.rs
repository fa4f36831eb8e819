//! Live-traffic monitoring for active trips.
//!
//! A trip carries its planned per-edge costs. On every poll the remaining
//! route is re-costed under the newest snapshot; if the live estimate exceeds
//! the planned one by more than the threshold, the route is recomputed from
//! the next decision node and adopted only if it is strictly faster.
//!
//! Vehicles move along their route at the travel-time rate of the snapshot in
//! force, so motion is piecewise constant between polls.

use alloc::collections::BTreeMap;
use alloc::sync::Arc;
use alloc::vec::Vec;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::graph::{EdgeId, NodeId, RoadGraph};
use crate::routing::{astar, HeuristicSpec, Route, RouteOutcome};
use crate::traffic::{edge_cost, valid_factor, TrafficSnapshot, TrafficUpdate};

/// Default fractional excess of live over predicted time that triggers a reroute.
pub const DEFAULT_THRESHOLD: f64 = 0.20;

/// Default simulated seconds between polls.
pub const DEFAULT_POLL_INTERVAL: f64 = 30.0;

pub type TripId = u64;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum RealtimeError {
    #[error("unknown node {0}")]
    UnknownNode(NodeId),
    #[error("no route from {from} to {to}")]
    NoRoute { from: NodeId, to: NodeId },
    #[error("scenario event {index} is out of time order")]
    EventOrder { index: usize },
    #[error("scenario event {index} has factor {factor} outside (0, 1]")]
    EventFactor { index: usize, factor: f64 },
    #[error("poll interval must be positive, got {0}")]
    PollInterval(f64),
    #[error("duplicate trip id {0}")]
    DuplicateTrip(TripId),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ActiveTrip {
    pub id: TripId,
    /// Full route from the trip origin; the vehicle is somewhere on it.
    pub route: Route,
    /// Expected travel time per route edge at the time each edge was planned.
    pub planned_costs: Vec<f64>,
    /// Index into `route.nodes` of the last node reached.
    pub position: usize,
    /// Fraction of the current edge covered under earlier traffic rates.
    done_frac: f64,
    /// Seconds spent on the current edge at `rate_cost`.
    progress_s: f64,
    /// Travel time of the current edge under the rate the vehicle is moving at.
    rate_cost: f64,
    pub destination: NodeId,
    /// Whole-route travel time predicted at assignment.
    pub predicted_eta: f64,
    pub started_at: f64,
    pub arrived_at: Option<f64>,
    pub reroutes: usize,
    /// Set when a recalculation found the destination unreachable.
    pub unreachable_flag: bool,
}

impl ActiveTrip {
    /// Starts a trip at the first node of `route`, planned under `snapshot`.
    pub fn new(id: TripId, route: Route, graph: &RoadGraph, snapshot: &TrafficSnapshot, started_at: f64) -> Self {
        let planned_costs = costs_of(graph, &route.edges, snapshot);
        let rate_cost = planned_costs.first().copied().unwrap_or(0.0);
        let predicted_eta = planned_costs.iter().sum();
        let destination = route.destination();
        let arrived_at = route.edges.is_empty().then_some(started_at);
        Self {
            id,
            route,
            planned_costs,
            position: 0,
            done_frac: 0.0,
            progress_s: 0.0,
            rate_cost,
            destination,
            predicted_eta,
            started_at,
            arrived_at,
            reroutes: 0,
            unreachable_flag: false,
        }
    }

    pub fn current_node(&self) -> NodeId {
        self.route.nodes[self.position]
    }

    pub fn is_arrived(&self) -> bool {
        self.arrived_at.is_some()
    }

    /// Whether the vehicle is part-way along an edge.
    pub fn mid_edge(&self) -> bool {
        self.done_frac > 0.0 || self.progress_s > 0.0
    }

    pub fn realized_time(&self) -> Option<f64> {
        self.arrived_at.map(|t| t - self.started_at)
    }

    /// Remaining time on the current edge if its full traversal costs `cost`.
    fn remaining_on_current(&self, cost: f64) -> f64 {
        if cost == self.rate_cost {
            (1.0 - self.done_frac) * cost - self.progress_s
        } else {
            (1.0 - self.done_frac - self.progress_s / self.rate_cost) * cost
        }
    }

    /// Planned travel time for what is left of the route.
    pub fn predicted_remaining(&self) -> f64 {
        if self.is_arrived() {
            return 0.0;
        }
        let cur = self.remaining_on_current(self.planned_costs[self.position]);
        cur + self.planned_costs[self.position + 1..].iter().sum::<f64>()
    }
}

fn costs_of(graph: &RoadGraph, edges: &[EdgeId], snapshot: &TrafficSnapshot) -> Vec<f64> {
    edges
        .iter()
        .map(|e| edge_cost(graph.edge_by_id(*e).expect("route edges exist in graph"), snapshot))
        .collect()
}

/// Remaining route time under `snapshot`.
pub fn live_eta(trip: &ActiveTrip, graph: &RoadGraph, snapshot: &TrafficSnapshot) -> f64 {
    if trip.is_arrived() {
        return 0.0;
    }
    let costs = costs_of(graph, &trip.route.edges[trip.position..], snapshot);
    trip.remaining_on_current(costs[0]) + costs[1..].iter().sum::<f64>()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DeviationReport {
    pub trip_id: TripId,
    /// Planned seconds for the remaining route.
    pub predicted_eta: f64,
    /// Seconds for the same remaining route under the latest snapshot.
    pub live_eta: f64,
    pub ratio: f64,
    pub threshold: f64,
    pub triggered: bool,
    pub snapshot_version: u64,
}

/// The trigger predicate: live strictly exceeds predicted × (1 + threshold).
pub fn deviation_triggered(predicted: f64, live: f64, threshold: f64) -> bool {
    live > predicted * (1.0 + threshold)
}

pub fn check_deviation(
    trip: &ActiveTrip,
    graph: &RoadGraph,
    snapshot: &TrafficSnapshot,
    threshold: f64,
) -> DeviationReport {
    let predicted = trip.predicted_remaining();
    let live = live_eta(trip, graph, snapshot);
    let ratio = if predicted > 0.0 { live / predicted } else { 1.0 };
    DeviationReport {
        trip_id: trip.id,
        predicted_eta: predicted,
        live_eta: live,
        ratio,
        threshold,
        triggered: deviation_triggered(predicted, live, threshold),
        snapshot_version: snapshot.version,
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "result", rename_all = "snake_case")]
pub enum Recalculation {
    Adopted {
        from_node: NodeId,
        old_live_s: f64,
        new_cost_s: f64,
    },
    /// The best route is the one already being driven.
    Unchanged { from_node: NodeId },
    /// A different route exists but is not strictly faster.
    NotBetter {
        from_node: NodeId,
        old_live_s: f64,
        best_cost_s: f64,
    },
    Unreachable { from_node: NodeId },
    Arrived,
}

/// Re-plans from the next node the vehicle can turn at (its current node, or
/// the end of the edge it is on) and adopts the new plan only if strictly
/// faster than the old remainder under the same snapshot.
pub fn recalculate(
    trip: &mut ActiveTrip,
    graph: &RoadGraph,
    snapshot: &TrafficSnapshot,
    h: &HeuristicSpec,
) -> Recalculation {
    if trip.is_arrived() {
        return Recalculation::Arrived;
    }
    let decision = if trip.mid_edge() { trip.position + 1 } else { trip.position };
    let from_node = trip.route.nodes[decision];
    if from_node == trip.destination {
        return Recalculation::Unchanged { from_node };
    }
    let old_edges = &trip.route.edges[decision..];
    let old_live: f64 = costs_of(graph, old_edges, snapshot).iter().sum();

    let outcome = astar(graph, snapshot, from_node, trip.destination, h);
    let Some(RouteOutcome::Found(new)) = outcome else {
        trip.unreachable_flag = true;
        return Recalculation::Unreachable { from_node };
    };
    if new.edges == old_edges && new.nodes == trip.route.nodes[decision..] {
        return Recalculation::Unchanged { from_node };
    }
    if new.cost_s >= old_live {
        return Recalculation::NotBetter {
            from_node,
            old_live_s: old_live,
            best_cost_s: new.cost_s,
        };
    }

    let new_costs = costs_of(graph, &new.edges, snapshot);
    trip.route.nodes.truncate(decision + 1);
    trip.route.nodes.extend_from_slice(&new.nodes[1..]);
    trip.route.edges.truncate(decision);
    trip.route.edges.extend_from_slice(&new.edges);
    trip.planned_costs.truncate(decision);
    trip.planned_costs.extend_from_slice(&new_costs);
    let all = costs_of(graph, &trip.route.edges, snapshot);
    trip.route.cost_s = all.iter().sum();
    trip.route.distance_m = trip
        .route
        .edges
        .iter()
        .map(|e| graph.edge_by_id(*e).expect("edge exists").length_m)
        .sum();
    trip.route.snapshot_version = snapshot.version;
    trip.reroutes += 1;
    trip.unreachable_flag = false;
    Recalculation::Adopted {
        from_node,
        old_live_s: old_live,
        new_cost_s: new.cost_s,
    }
}

/// Moves the vehicle forward `dt` seconds starting at clock `now`.
pub fn advance(trip: &mut ActiveTrip, graph: &RoadGraph, snapshot: &TrafficSnapshot, now: f64, dt: f64) {
    let mut elapsed = 0.0;
    while !trip.is_arrived() && elapsed < dt {
        let edge = graph
            .edge_by_id(trip.route.edges[trip.position])
            .expect("route edges exist in graph");
        let c = edge_cost(edge, snapshot);
        if c != trip.rate_cost {
            trip.done_frac += trip.progress_s / trip.rate_cost;
            trip.progress_s = 0.0;
            trip.rate_cost = c;
        }
        let left = ((1.0 - trip.done_frac) * c - trip.progress_s).max(0.0);
        let budget = dt - elapsed;
        if left <= budget {
            elapsed += left;
            trip.position += 1;
            trip.done_frac = 0.0;
            trip.progress_s = 0.0;
            if trip.position == trip.route.edges.len() {
                trip.arrived_at = Some(now + elapsed);
            } else {
                let next = graph
                    .edge_by_id(trip.route.edges[trip.position])
                    .expect("route edges exist in graph");
                trip.rate_cost = edge_cost(next, snapshot);
            }
        } else {
            trip.progress_s += budget;
            elapsed = dt;
        }
    }
}

/// One timed speed-factor change in a scenario.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScenarioEvent {
    /// Seconds after scenario start.
    pub t: f64,
    pub edge: EdgeId,
    pub factor: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Scenario {
    pub seed: u64,
    pub poll_interval: f64,
    pub events: Vec<ScenarioEvent>,
}

impl Scenario {
    pub fn validate(&self) -> Result<(), RealtimeError> {
        if !(self.poll_interval > 0.0 && self.poll_interval.is_finite()) {
            return Err(RealtimeError::PollInterval(self.poll_interval));
        }
        for (i, e) in self.events.iter().enumerate() {
            if !valid_factor(e.factor) {
                return Err(RealtimeError::EventFactor {
                    index: i,
                    factor: e.factor,
                });
            }
            if i > 0 && !(e.t >= self.events[i - 1].t) {
                return Err(RealtimeError::EventOrder { index: i });
            }
        }
        Ok(())
    }

    /// Random congestion timeline over `graph`, reproducible from `seed`.
    pub fn generate(seed: u64, graph: &RoadGraph, n_events: usize, horizon_s: f64, poll_interval: f64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut events: Vec<ScenarioEvent> = (0..n_events)
            .map(|_| {
                let e = graph.edge(rng.random_range(0..graph.edge_count().max(1)));
                ScenarioEvent {
                    t: crate::math::floor(rng.random::<f64>() * horizon_s),
                    edge: e.id,
                    factor: 0.1 + 0.9 * rng.random::<f64>(),
                }
            })
            .collect();
        events.sort_by(|a, b| a.t.total_cmp(&b.t).then(a.edge.cmp(&b.edge)));
        Self {
            seed,
            poll_interval,
            events,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RerouteRecord {
    pub trip_id: TripId,
    pub recalculation: Recalculation,
    pub route_nodes: Vec<NodeId>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Arrival {
    pub trip_id: TripId,
    pub t: f64,
}

/// Everything that happened during one poll.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TickRecord {
    pub tick: u64,
    pub t: f64,
    pub applied_events: Vec<ScenarioEvent>,
    pub rejected_events: usize,
    pub snapshot_version: u64,
    pub reports: Vec<DeviationReport>,
    pub recalculations: Vec<RerouteRecord>,
    pub arrivals: Vec<Arrival>,
}

/// Virtual-clock driver shared by batch scenario runs and the service.
#[derive(Debug, Clone)]
pub struct Simulator {
    graph: Arc<RoadGraph>,
    heuristic: HeuristicSpec,
    threshold: f64,
    reroute: bool,
    scenario: Scenario,
    next_event: usize,
    clock: f64,
    ticks: u64,
    snapshot: Arc<TrafficSnapshot>,
    trips: BTreeMap<TripId, ActiveTrip>,
    last_reports: BTreeMap<TripId, DeviationReport>,
}

impl Simulator {
    pub fn new(
        graph: Arc<RoadGraph>,
        scenario: Scenario,
        base: Arc<TrafficSnapshot>,
        threshold: f64,
        reroute: bool,
    ) -> Result<Self, RealtimeError> {
        scenario.validate()?;
        let heuristic = HeuristicSpec::haversine_for(&graph);
        Ok(Self {
            graph,
            heuristic,
            threshold,
            reroute,
            scenario,
            next_event: 0,
            clock: 0.0,
            ticks: 0,
            snapshot: base,
            trips: BTreeMap::new(),
            last_reports: BTreeMap::new(),
        })
    }

    pub fn with_heuristic(mut self, h: HeuristicSpec) -> Self {
        self.heuristic = h;
        self
    }

    pub fn clock(&self) -> f64 {
        self.clock
    }

    pub fn snapshot(&self) -> &Arc<TrafficSnapshot> {
        &self.snapshot
    }

    pub fn graph(&self) -> &Arc<RoadGraph> {
        &self.graph
    }

    pub fn scenario(&self) -> &Scenario {
        &self.scenario
    }

    pub fn trips(&self) -> &BTreeMap<TripId, ActiveTrip> {
        &self.trips
    }

    pub fn trip(&self, id: TripId) -> Option<&ActiveTrip> {
        self.trips.get(&id)
    }

    pub fn last_report(&self, id: TripId) -> Option<&DeviationReport> {
        self.last_reports.get(&id)
    }

    /// Pending scenario events.
    pub fn events_remaining(&self) -> usize {
        self.scenario.events.len() - self.next_event
    }

    pub fn all_arrived(&self) -> bool {
        self.trips.values().all(ActiveTrip::is_arrived)
    }

    /// Plans a trip under the current snapshot and starts it at the current clock.
    pub fn add_trip(&mut self, id: TripId, origin: NodeId, dest: NodeId) -> Result<&ActiveTrip, RealtimeError> {
        if self.trips.contains_key(&id) {
            return Err(RealtimeError::DuplicateTrip(id));
        }
        let outcome = astar(&self.graph, &self.snapshot, origin, dest, &self.heuristic);
        let route = match outcome {
            None => {
                let missing = if self.graph.node_idx(origin).is_none() { origin } else { dest };
                return Err(RealtimeError::UnknownNode(missing));
            }
            Some(RouteOutcome::NoRoute { .. }) => {
                return Err(RealtimeError::NoRoute { from: origin, to: dest })
            }
            Some(RouteOutcome::Found(r)) => r,
        };
        let trip = ActiveTrip::new(id, route, &self.graph, &self.snapshot, self.clock);
        Ok(self.trips.entry(id).or_insert(trip))
    }

    /// Adds an already planned trip (used to resume service state).
    pub fn insert_trip(&mut self, trip: ActiveTrip) -> Result<(), RealtimeError> {
        if self.trips.contains_key(&trip.id) {
            return Err(RealtimeError::DuplicateTrip(trip.id));
        }
        self.trips.insert(trip.id, trip);
        Ok(())
    }

    /// One poll: apply due events, check every active trip, reroute where
    /// triggered, then advance the clock by the poll interval.
    pub fn tick(&mut self) -> TickRecord {
        let now = self.clock;
        let mut due = Vec::new();
        while self.next_event < self.scenario.events.len() && self.scenario.events[self.next_event].t <= now {
            due.push(self.scenario.events[self.next_event]);
            self.next_event += 1;
        }
        let mut rejected = 0;
        if !due.is_empty() {
            let updates: Vec<TrafficUpdate> = due
                .iter()
                .map(|e| TrafficUpdate {
                    edge_id: e.edge,
                    observed_speed_factor: e.factor,
                    timestamp: e.t,
                })
                .collect();
            let (next, summary) = self.snapshot.apply_updates(&updates);
            rejected = summary.rejected;
            self.snapshot = Arc::new(next);
        }

        let snapshot = Arc::clone(&self.snapshot);
        let mut reports = Vec::new();
        let mut recalculations = Vec::new();
        for trip in self.trips.values_mut().filter(|t| !t.is_arrived()) {
            let report = check_deviation(trip, &self.graph, &snapshot, self.threshold);
            if report.triggered && self.reroute {
                let r = recalculate(trip, &self.graph, &snapshot, &self.heuristic);
                recalculations.push(RerouteRecord {
                    trip_id: trip.id,
                    recalculation: r,
                    route_nodes: trip.route.nodes.clone(),
                });
            }
            self.last_reports.insert(trip.id, report.clone());
            reports.push(report);
        }

        let dt = self.scenario.poll_interval;
        let mut arrivals = Vec::new();
        for trip in self.trips.values_mut().filter(|t| !t.is_arrived()) {
            advance(trip, &self.graph, &snapshot, now, dt);
            if let Some(t) = trip.arrived_at {
                arrivals.push(Arrival { trip_id: trip.id, t });
            }
        }

        let record = TickRecord {
            tick: self.ticks,
            t: now,
            applied_events: due,
            rejected_events: rejected,
            snapshot_version: snapshot.version,
            reports,
            recalculations,
            arrivals,
        };
        self.ticks += 1;
        self.clock = now + dt;
        record
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TripRequest {
    pub id: TripId,
    pub origin: NodeId,
    pub destination: NodeId,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TripOutcome {
    pub trip_id: TripId,
    pub predicted_eta: f64,
    pub realized_s: Option<f64>,
    pub reroutes: usize,
    pub route_nodes: Vec<NodeId>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EventLog {
    pub seed: u64,
    pub threshold: f64,
    pub reroute: bool,
    pub ticks: Vec<TickRecord>,
    pub trips: Vec<TripOutcome>,
}

/// Upper bound on polls in a batch run.
pub const MAX_TICKS: u64 = 1_000_000;

/// Runs a scenario to completion (all trips arrived) on a virtual clock.
pub fn run_scenario(
    scenario: &Scenario,
    graph: Arc<RoadGraph>,
    trips: &[TripRequest],
    threshold: f64,
    h: &HeuristicSpec,
    reroute: bool,
) -> Result<EventLog, RealtimeError> {
    let mut sim = Simulator::new(
        graph,
        scenario.clone(),
        Arc::new(TrafficSnapshot::free_flow()),
        threshold,
        reroute,
    )?
    .with_heuristic(*h);
    for t in trips {
        sim.add_trip(t.id, t.origin, t.destination)?;
    }
    let mut ticks = Vec::new();
    while !sim.all_arrived() && sim.ticks < MAX_TICKS {
        ticks.push(sim.tick());
    }
    let outcomes = sim
        .trips
        .values()
        .map(|t| TripOutcome {
            trip_id: t.id,
            predicted_eta: t.predicted_eta,
            realized_s: t.realized_time(),
            reroutes: t.reroutes,
            route_nodes: t.route.nodes.clone(),
        })
        .collect();
    Ok(EventLog {
        seed: scenario.seed,
        threshold,
        reroute,
        ticks,
        trips: outcomes,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TripComparison {
    pub trip_id: TripId,
    pub rerouted_s: Option<f64>,
    pub baseline_s: Option<f64>,
    /// rerouted / baseline; below 1 means rerouting helped.
    pub time_ratio: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PairedLog {
    pub rerouted: EventLog,
    pub baseline: EventLog,
    pub comparison: Vec<TripComparison>,
}

/// Runs the same scenario with and without rerouting.
pub fn run_paired(
    scenario: &Scenario,
    graph: Arc<RoadGraph>,
    trips: &[TripRequest],
    threshold: f64,
    h: &HeuristicSpec,
) -> Result<PairedLog, RealtimeError> {
    let rerouted = run_scenario(scenario, Arc::clone(&graph), trips, threshold, h, true)?;
    let baseline = run_scenario(scenario, graph, trips, threshold, h, false)?;
    let comparison = rerouted
        .trips
        .iter()
        .zip(&baseline.trips)
        .map(|(a, b)| TripComparison {
            trip_id: a.trip_id,
            rerouted_s: a.realized_s,
            baseline_s: b.realized_s,
            time_ratio: match (a.realized_s, b.realized_s) {
                (Some(x), Some(y)) if y > 0.0 => Some(x / y),
                _ => None,
            },
        })
        .collect();
    Ok(PairedLog {
        rerouted,
        baseline,
        comparison,
    })
}
