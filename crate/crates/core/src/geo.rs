//! Latitude/longitude primitives and great-circle distance.

use core::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::math;

/// Mean Earth radius used for every distance in the engine, in meters.
pub const EARTH_RADIUS_M: f64 = 6_371_000.0;

/// A WGS84 position in degrees. Always (lat, lon) order.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LatLon {
    pub lat: f64,
    pub lon: f64,
}

impl LatLon {
    pub const fn new(lat: f64, lon: f64) -> Self {
        Self { lat, lon }
    }

    /// True when both components are finite and inside the geographic ranges.
    pub fn is_valid(&self) -> bool {
        self.lat.is_finite()
            && self.lon.is_finite()
            && (-90.0..=90.0).contains(&self.lat)
            && (-180.0..=180.0).contains(&self.lon)
    }
}

/// Great-circle distance in meters using the haversine formula.
pub fn haversine(a: LatLon, b: LatLon) -> f64 {
    let to_rad = PI / 180.0;
    let phi1 = a.lat * to_rad;
    let phi2 = b.lat * to_rad;
    let dphi = (b.lat - a.lat) * to_rad;
    let dlambda = (b.lon - a.lon) * to_rad;

    let s_phi = math::sin(dphi / 2.0);
    let s_lambda = math::sin(dlambda / 2.0);
    let h = s_phi * s_phi + math::cos(phi1) * math::cos(phi2) * s_lambda * s_lambda;
    // rounding can push h a hair above 1 for antipodal points
    let h = h.clamp(0.0, 1.0);
    2.0 * EARTH_RADIUS_M * math::asin(math::sqrt(h))
}

/// Closed latitude/longitude rectangle.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BBox {
    pub lat_min: f64,
    pub lon_min: f64,
    pub lat_max: f64,
    pub lon_max: f64,
}

impl BBox {
    pub const fn new(lat_min: f64, lon_min: f64, lat_max: f64, lon_max: f64) -> Self {
        Self {
            lat_min,
            lon_min,
            lat_max,
            lon_max,
        }
    }

    /// Default New York City service area.
    pub const NYC: BBox = BBox::new(40.50, -74.30, 41.00, -73.60);

    /// Non-degenerate and finite.
    pub fn is_valid(&self) -> bool {
        [self.lat_min, self.lon_min, self.lat_max, self.lon_max]
            .iter()
            .all(|v| v.is_finite())
            && self.lat_min < self.lat_max
            && self.lon_min < self.lon_max
    }

    /// Closed containment: points on the boundary are inside.
    pub fn contains(&self, p: LatLon) -> bool {
        p.lat >= self.lat_min && p.lat <= self.lat_max && p.lon >= self.lon_min && p.lon <= self.lon_max
    }

    pub fn center(&self) -> LatLon {
        LatLon::new(
            (self.lat_min + self.lat_max) / 2.0,
            (self.lon_min + self.lon_max) / 2.0,
        )
    }
}

/// Local equirectangular projection to meters around a fixed origin.
///
/// Accurate to well under a percent over a city-sized extent, which is what the
/// density surfaces need.
#[derive(Debug, Clone, Copy)]
pub struct LocalProjection {
    origin: LatLon,
    meters_per_deg_lat: f64,
    meters_per_deg_lon: f64,
}

impl LocalProjection {
    pub fn new(origin: LatLon) -> Self {
        let per_deg = EARTH_RADIUS_M * PI / 180.0;
        Self {
            origin,
            meters_per_deg_lat: per_deg,
            meters_per_deg_lon: per_deg * math::cos(origin.lat * PI / 180.0),
        }
    }

    /// (x east, y north) in meters.
    pub fn project(&self, p: LatLon) -> (f64, f64) {
        (
            (p.lon - self.origin.lon) * self.meters_per_deg_lon,
            (p.lat - self.origin.lat) * self.meters_per_deg_lat,
        )
    }

    pub fn meters_per_deg_lat(&self) -> f64 {
        self.meters_per_deg_lat
    }

    pub fn meters_per_deg_lon(&self) -> f64 {
        self.meters_per_deg_lon
    }
}
