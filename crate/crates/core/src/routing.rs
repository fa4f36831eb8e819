//! Shortest travel-time paths: Dijkstra, A*, nearest-node snapping, and the
//! point-to-point route entry used by the service.

use alloc::collections::BinaryHeap;
use alloc::vec;
use alloc::vec::Vec;
use core::cmp::{Ordering, Reverse};

use serde::{Deserialize, Serialize};

use crate::geo::{haversine, LatLon};
use crate::graph::{EdgeId, NodeId, RoadGraph};
use crate::traffic::{edge_cost, TrafficSnapshot};

/// A computed path together with its cost under one snapshot.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Route {
    pub nodes: Vec<NodeId>,
    pub edges: Vec<EdgeId>,
    /// Seconds: sum of edge travel times under `snapshot_version`.
    pub cost_s: f64,
    pub distance_m: f64,
    pub snapshot_version: u64,
}

impl Route {
    /// Zero-length route that starts and ends at `node`.
    pub fn at(node: NodeId, snapshot_version: u64) -> Self {
        Self {
            nodes: vec![node],
            edges: Vec::new(),
            cost_s: 0.0,
            distance_m: 0.0,
            snapshot_version,
        }
    }

    pub fn origin(&self) -> NodeId {
        self.nodes[0]
    }

    pub fn destination(&self) -> NodeId {
        *self.nodes.last().expect("route has at least one node")
    }
}

/// Result of a search. No route is an ordinary outcome, not an error.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "status", rename_all = "snake_case")]
pub enum RouteOutcome {
    Found(Route),
    NoRoute { settled: usize },
}

impl RouteOutcome {
    pub fn route(&self) -> Option<&Route> {
        match self {
            RouteOutcome::Found(r) => Some(r),
            RouteOutcome::NoRoute { .. } => None,
        }
    }

    pub fn into_route(self) -> Option<Route> {
        match self {
            RouteOutcome::Found(r) => Some(r),
            RouteOutcome::NoRoute { .. } => None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum HeuristicKind {
    Zero,
    HaversineOverVmax,
}

/// Remaining-cost estimate for A*.
///
/// `HaversineOverVmax` divides the great-circle distance to the goal by the
/// fastest free-flow speed in the network. Speed factors never exceed 1, so
/// the estimate never exceeds the true remaining travel time.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HeuristicSpec {
    pub kind: HeuristicKind,
    /// Meters per second; the maximum base speed over all edges.
    pub vmax: f64,
    /// Lower bound on edge length over straight-line distance (≤ 1).
    pub detour_floor: f64,
}

// Keeps rounding in the distance computation from tipping the estimate
// above the true cost on perfectly straight, max-speed corridors.
const HEURISTIC_MARGIN: f64 = 1.0 - 1e-9;

impl HeuristicSpec {
    pub fn zero() -> Self {
        Self {
            kind: HeuristicKind::Zero,
            vmax: 0.0,
            detour_floor: 1.0,
        }
    }

    pub fn haversine_for(graph: &RoadGraph) -> Self {
        Self {
            kind: HeuristicKind::HaversineOverVmax,
            vmax: graph.max_speed(),
            detour_floor: graph.detour_floor(),
        }
    }

    /// Estimated seconds from `from` to `goal`.
    pub fn estimate(&self, from: LatLon, goal: LatLon) -> f64 {
        match self.kind {
            HeuristicKind::Zero => 0.0,
            HeuristicKind::HaversineOverVmax if self.vmax > 0.0 => {
                haversine(from, goal) * self.detour_floor / self.vmax * HEURISTIC_MARGIN
            }
            HeuristicKind::HaversineOverVmax => 0.0,
        }
    }
}

/// Expansion bookkeeping, used to compare search strategies.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct SearchStats {
    /// Node expansions, counting re-expansions of reopened nodes.
    pub expanded: usize,
    /// Node ids in the order they were expanded.
    pub order: Vec<NodeId>,
}

#[derive(Clone, Copy, PartialEq)]
struct QueueKey {
    priority: f64,
    node: usize,
}

impl Eq for QueueKey {}

impl PartialOrd for QueueKey {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for QueueKey {
    fn cmp(&self, other: &Self) -> Ordering {
        self.priority
            .total_cmp(&other.priority)
            .then(self.node.cmp(&other.node))
    }
}

/// Least travel-time path from `src` to `dst`.
///
/// Ties in the queue are broken by the smaller node id; the search stops as
/// soon as `dst` is settled. Returns `None` if either endpoint is unknown.
pub fn dijkstra(
    graph: &RoadGraph,
    snapshot: &TrafficSnapshot,
    src: NodeId,
    dst: NodeId,
) -> Option<RouteOutcome> {
    dijkstra_with_stats(graph, snapshot, src, dst).map(|(r, _)| r)
}

pub fn dijkstra_with_stats(
    graph: &RoadGraph,
    snapshot: &TrafficSnapshot,
    src: NodeId,
    dst: NodeId,
) -> Option<(RouteOutcome, SearchStats)> {
    search(graph, snapshot, src, dst, &HeuristicSpec::zero())
}

/// A* over the same costs as [`dijkstra`]; with an admissible heuristic the
/// returned cost is identical.
pub fn astar(
    graph: &RoadGraph,
    snapshot: &TrafficSnapshot,
    src: NodeId,
    dst: NodeId,
    h: &HeuristicSpec,
) -> Option<RouteOutcome> {
    astar_with_stats(graph, snapshot, src, dst, h).map(|(r, _)| r)
}

pub fn astar_with_stats(
    graph: &RoadGraph,
    snapshot: &TrafficSnapshot,
    src: NodeId,
    dst: NodeId,
    h: &HeuristicSpec,
) -> Option<(RouteOutcome, SearchStats)> {
    search(graph, snapshot, src, dst, h)
}

fn search(
    graph: &RoadGraph,
    snapshot: &TrafficSnapshot,
    src: NodeId,
    dst: NodeId,
    h: &HeuristicSpec,
) -> Option<(RouteOutcome, SearchStats)> {
    let s = graph.node_idx(src)?;
    let t = graph.node_idx(dst)?;
    let n = graph.node_count();
    let goal = graph.node(t).pos;

    let mut dist = vec![f64::INFINITY; n];
    // (predecessor node, edge index) for path reconstruction
    let mut pred: Vec<Option<(usize, usize)>> = vec![None; n];
    let mut closed = vec![false; n];
    let mut heur: Vec<Option<f64>> = vec![None; n];
    let mut estimate = |i: usize| -> f64 {
        *heur[i].get_or_insert_with(|| h.estimate(graph.node(i).pos, goal))
    };

    let mut stats = SearchStats::default();
    let mut heap = BinaryHeap::new();
    dist[s] = 0.0;
    heap.push(Reverse(QueueKey {
        priority: estimate(s),
        node: s,
    }));
    let mut settled = 0usize;

    while let Some(Reverse(QueueKey { priority, node: u })) = heap.pop() {
        if closed[u] || priority > dist[u] + estimate(u) {
            continue;
        }
        closed[u] = true;
        settled += 1;
        stats.expanded += 1;
        stats.order.push(graph.node(u).id);
        if u == t {
            break;
        }
        for arc in graph.out_arcs(u) {
            let edge = graph.edge(arc.edge);
            let cand = dist[u] + edge_cost(edge, snapshot);
            if cand < dist[arc.to] {
                dist[arc.to] = cand;
                pred[arc.to] = Some((u, arc.edge));
                // a better path into a closed node reopens it
                closed[arc.to] = false;
                heap.push(Reverse(QueueKey {
                    priority: cand + estimate(arc.to),
                    node: arc.to,
                }));
            }
        }
    }

    if !closed[t] {
        return Some((RouteOutcome::NoRoute { settled }, stats));
    }

    let mut node_path = vec![t];
    let mut edge_path = Vec::new();
    let mut cur = t;
    while let Some((p, e)) = pred[cur] {
        edge_path.push(e);
        node_path.push(p);
        cur = p;
        if cur == s {
            break;
        }
    }
    node_path.reverse();
    edge_path.reverse();

    let distance_m = edge_path.iter().map(|&e| graph.edge(e).length_m).sum();
    let route = Route {
        nodes: node_path.into_iter().map(|i| graph.node(i).id).collect(),
        edges: edge_path.into_iter().map(|e| graph.edge(e).id).collect(),
        cost_s: dist[t],
        distance_m,
        snapshot_version: snapshot.version,
    };
    Some((RouteOutcome::Found(route), stats))
}

/// Sum of edge travel times along `edges`, folded left to right.
pub fn path_cost(graph: &RoadGraph, edges: &[EdgeId], snapshot: &TrafficSnapshot) -> Option<f64> {
    edges.iter().try_fold(0.0, |acc, id| {
        graph.edge_by_id(*id).map(|e| acc + edge_cost(e, snapshot))
    })
}

/// Node nearest to `point` by great-circle distance; ties go to the lower id.
pub fn snap(point: LatLon, graph: &RoadGraph) -> Option<NodeId> {
    snap_with_distance(point, graph).map(|(id, _)| id)
}

pub fn snap_with_distance(point: LatLon, graph: &RoadGraph) -> Option<(NodeId, f64)> {
    let mut best: Option<(NodeId, f64)> = None;
    // nodes are in id order, so strict < keeps the lowest id on ties
    for n in graph.nodes() {
        let d = haversine(point, n.pos);
        if best.is_none_or(|(_, bd)| d < bd) {
            best = Some((n.id, d));
        }
    }
    best
}

/// Outcome of a coordinate-to-coordinate query.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RouteAnswer {
    pub outcome: RouteOutcome,
    pub crow_flight_m: f64,
    pub origin_node: NodeId,
    pub dest_node: NodeId,
    pub origin_snap_m: f64,
    pub dest_snap_m: f64,
}

/// Snaps both endpoints to the graph and runs A*. Returns `None` only for an
/// empty graph.
pub fn compute_route(
    origin: LatLon,
    dest: LatLon,
    graph: &RoadGraph,
    snapshot: &TrafficSnapshot,
    h: &HeuristicSpec,
) -> Option<RouteAnswer> {
    let (o, od) = snap_with_distance(origin, graph)?;
    let (d, dd) = snap_with_distance(dest, graph)?;
    let outcome = astar(graph, snapshot, o, d, h)?;
    Some(RouteAnswer {
        outcome,
        crow_flight_m: haversine(origin, dest),
        origin_node: o,
        dest_node: d,
        origin_snap_m: od,
        dest_snap_m: dd,
    })
}
