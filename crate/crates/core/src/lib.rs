//! Core algorithms for a traffic-aware urban mobility engine.
//!
//! Everything in this crate is pure computation over in-memory data and only
//! needs `alloc`: great-circle geometry, road graphs with versioned traffic
//! snapshots, Dijkstra / A* routing, K-Means congestion regimes, least-squares
//! trip-duration models, spatiotemporal aggregation with kernel density
//! surfaces, and the deviation-driven rerouting simulator.
//!
//! File formats, CSV ingestion, time zones, the HTTP service and the CLI live
//! in the `urbanflow` crate.
#![no_std]
#![deny(unsafe_code)]

extern crate alloc;

#[cfg(test)]
extern crate std;

mod math;

pub mod geo;
pub mod graph;
pub mod kmeans;
pub mod linreg;
pub mod matrix;
pub mod realtime;
pub mod regimes;
pub mod routing;
pub mod spatiotemporal;
pub mod traffic;
pub mod trips;

pub use geo::{haversine, BBox, LatLon, EARTH_RADIUS_M};
pub use graph::{EdgeId, GraphError, NodeId, RoadGraph};
pub use matrix::Matrix;
pub use routing::{HeuristicSpec, Route, RouteOutcome};
pub use traffic::{TrafficSnapshot, TrafficUpdate};
