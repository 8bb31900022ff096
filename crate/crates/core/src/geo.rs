//! WGS84 points, great-circle distance and the local planar projection.

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Mean Earth radius in meters.
pub const EARTH_RADIUS_M: f64 = 6_371_000.0;

/// Largest latitude/longitude offset from the projection origin for which the
/// equirectangular approximation is accepted.
pub const PROJECTION_LIMIT_DEG: f64 = 2.0;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum GeoError {
    #[error("invalid coordinate ({lat}, {lon})")]
    InvalidCoordinate { lat: f64, lon: f64 },
    #[error("point ({lat}, {lon}) is outside the local projection range around the origin")]
    OutOfProjectionRange { lat: f64, lon: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GeoPoint {
    pub lat: f64,
    pub lon: f64,
}

impl GeoPoint {
    pub fn new(lat: f64, lon: f64) -> Result<Self, GeoError> {
        if !(lat.is_finite() && lon.is_finite()) || !(-90.0..=90.0).contains(&lat) || !(-180.0..=180.0).contains(&lon) {
            return Err(GeoError::InvalidCoordinate { lat, lon });
        }
        Ok(Self { lat, lon })
    }

    pub fn is_valid(&self) -> bool {
        Self::new(self.lat, self.lon).is_ok()
    }
}

/// Haversine great-circle distance in meters.
pub fn haversine_m(a: GeoPoint, b: GeoPoint) -> f64 {
    let (lat1, lat2) = (a.lat.to_radians(), b.lat.to_radians());
    let dlat = lat2 - lat1;
    let dlon = (b.lon - a.lon).to_radians();
    let h = (dlat / 2.0).sin().powi(2) + lat1.cos() * lat2.cos() * (dlon / 2.0).sin().powi(2);
    2.0 * EARTH_RADIUS_M * h.sqrt().min(1.0).asin()
}

/// Local equirectangular projection around a fixed origin:
/// `x = R·Δlon·cos(lat0)`, `y = R·Δlat`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LocalProjection {
    origin: GeoPoint,
    cos_lat: f64,
}

impl LocalProjection {
    pub fn new(origin: GeoPoint) -> Self {
        Self { origin, cos_lat: origin.lat.to_radians().cos() }
    }

    pub fn origin(&self) -> GeoPoint {
        self.origin
    }

    /// Projects without a range check.
    pub fn to_xy(&self, p: GeoPoint) -> (f64, f64) {
        let x = EARTH_RADIUS_M * (p.lon - self.origin.lon).to_radians() * self.cos_lat;
        let y = EARTH_RADIUS_M * (p.lat - self.origin.lat).to_radians();
        (x, y)
    }

    /// Projects, rejecting points more than 2° from the origin in either axis.
    pub fn project(&self, p: GeoPoint) -> Result<(f64, f64), GeoError> {
        if (p.lat - self.origin.lat).abs() >= PROJECTION_LIMIT_DEG
            || (p.lon - self.origin.lon).abs() >= PROJECTION_LIMIT_DEG
        {
            return Err(GeoError::OutOfProjectionRange { lat: p.lat, lon: p.lon });
        }
        Ok(self.to_xy(p))
    }

    pub fn unproject(&self, x: f64, y: f64) -> GeoPoint {
        GeoPoint {
            lat: self.origin.lat + (y / EARTH_RADIUS_M).to_degrees(),
            lon: self.origin.lon + (x / (EARTH_RADIUS_M * self.cos_lat)).to_degrees(),
        }
    }
}

/// `project(p, origin)` as a free function.
pub fn project(p: GeoPoint, origin: GeoPoint) -> Result<(f64, f64), GeoError> {
    LocalProjection::new(origin).project(p)
}

/// Distance from `(px, py)` to the segment `a`–`b` in the plane.
pub fn point_segment_distance(p: (f64, f64), a: (f64, f64), b: (f64, f64)) -> f64 {
    let (dx, dy) = (b.0 - a.0, b.1 - a.1);
    let len2 = dx * dx + dy * dy;
    let t = if len2 == 0.0 { 0.0 } else { (((p.0 - a.0) * dx + (p.1 - a.1) * dy) / len2).clamp(0.0, 1.0) };
    let (cx, cy) = (a.0 + t * dx, a.1 + t * dy);
    ((p.0 - cx).powi(2) + (p.1 - cy).powi(2)).sqrt()
}
