use std::io::{Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{open, IngestError};
use crate::geo::{point_segment_distance, GeoPoint, LocalProjection};

/// Roads farther than this from the query point are not matched.
pub const ROAD_SEARCH_RADIUS_M: f64 = 100.0;

/// Distances closer than this are considered tied.
const TIE_EPS_M: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Road {
    pub limit_mps: f64,
    /// Polyline as `[lat, lon]` pairs.
    pub points: Vec<[f64; 2]>,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(transparent)]
pub struct SpeedLimitMap {
    pub roads: Vec<Road>,
}

impl SpeedLimitMap {
    pub fn validate(&self) -> Result<(), IngestError> {
        for (i, r) in self.roads.iter().enumerate() {
            if !(r.limit_mps.is_finite() && r.limit_mps > 0.0) {
                return Err(IngestError::InvalidRoad(format!("road {i}: limit must be positive")));
            }
            if r.points.is_empty() {
                return Err(IngestError::InvalidRoad(format!("road {i}: no points")));
            }
            for p in &r.points {
                GeoPoint::new(p[0], p[1]).map_err(|e| IngestError::InvalidRoad(format!("road {i}: {e}")))?;
            }
        }
        Ok(())
    }
}

pub fn read_speed_limits<R: Read>(r: R) -> Result<SpeedLimitMap, IngestError> {
    let map: SpeedLimitMap = serde_json::from_reader(r)?;
    map.validate()?;
    Ok(map)
}

pub fn parse_speed_limits(path: &Path) -> Result<SpeedLimitMap, IngestError> {
    read_speed_limits(open(path)?)
}

pub fn write_speed_limits<W: Write>(w: W, map: &SpeedLimitMap) -> Result<(), IngestError> {
    serde_json::to_writer(w, map)?;
    Ok(())
}

/// Limit of the road nearest to `p` (point-to-segment distance in a local
/// plane centred on `p`). Ties go to the road listed first.
pub fn lookup_speed_limit(map: &SpeedLimitMap, p: GeoPoint) -> Result<f64, IngestError> {
    if map.roads.is_empty() {
        return Err(IngestError::EmptyMap);
    }
    let proj = LocalProjection::new(p);
    let mut best: Option<(f64, f64)> = None;
    for road in &map.roads {
        let pts: Vec<(f64, f64)> = road.points.iter().map(|q| proj.to_xy(GeoPoint { lat: q[0], lon: q[1] })).collect();
        let d = if pts.len() == 1 {
            point_segment_distance((0.0, 0.0), pts[0], pts[0])
        } else {
            pts.windows(2).map(|w| point_segment_distance((0.0, 0.0), w[0], w[1])).fold(f64::INFINITY, f64::min)
        };
        match best {
            Some((bd, _)) if d >= bd - TIE_EPS_M => {}
            _ => best = Some((d, road.limit_mps)),
        }
    }
    let (d, limit) = best.expect("non-empty map");
    if d > ROAD_SEARCH_RADIUS_M {
        return Err(IngestError::NoRoadWithin { radius_m: ROAD_SEARCH_RADIUS_M, nearest_m: d });
    }
    Ok(limit)
}
