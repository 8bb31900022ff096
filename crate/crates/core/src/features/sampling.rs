use std::io::Write;

use serde::{Deserialize, Serialize};

use super::FeatureError;
use crate::dataset::{TelemetrySample, TripSeries};
use crate::geo::haversine_m;
use crate::numfmt::sig9;

pub const DEFAULT_INTERVAL_M: f64 = 20.0;

/// Slack for cumulative-distance round-off when comparing to the interval.
const DIST_EPS_M: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Anchor {
    pub frame_index: usize,
    pub odometer_m: f64,
    /// Telemetry sample the frame is taken at.
    pub sample_index: usize,
    /// One past the last sample of the frame's segment.
    pub segment_end: usize,
}

impl Anchor {
    pub fn segment<'a>(&self, samples: &'a [TelemetrySample]) -> &'a [TelemetrySample] {
        &samples[self.sample_index..self.segment_end]
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SamplingPlan {
    pub interval_m: f64,
    pub anchors: Vec<Anchor>,
}

impl SamplingPlan {
    pub fn len(&self) -> usize {
        self.anchors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.anchors.is_empty()
    }

    /// Audit export: `trip_id,frame_index,odometer_m,lat,lon`.
    pub fn write_csv<W: Write>(&self, w: W, trip: &TripSeries, header: bool) -> csv::Result<()> {
        let mut out = csv::WriterBuilder::new().has_headers(false).from_writer(w);
        if header {
            out.write_record(["trip_id", "frame_index", "odometer_m", "lat", "lon"])?;
        }
        for a in &self.anchors {
            let p = trip.samples()[a.sample_index].pos;
            out.write_record(&[
                trip.trip_id().to_string(),
                a.frame_index.to_string(),
                sig9(a.odometer_m),
                sig9(p.lat),
                sig9(p.lon),
            ])?;
        }
        out.flush()?;
        Ok(())
    }
}

/// Anchors one frame per `interval_m` of travelled path. The first anchor is
/// the first sample; each next anchor is the earliest sample at least
/// `interval_m` of cumulative great-circle distance past the previous one.
pub fn sample_samples(samples: &[TelemetrySample], interval_m: f64) -> Result<SamplingPlan, FeatureError> {
    if samples.is_empty() {
        return Err(FeatureError::DegenerateTrip);
    }
    if !(interval_m.is_finite() && interval_m > 0.0) {
        return Err(FeatureError::BadInterval(interval_m));
    }
    let mut odo = 0.0;
    let mut last_odo = 0.0;
    let mut starts = vec![(0usize, 0.0)];
    for i in 1..samples.len() {
        odo += haversine_m(samples[i - 1].pos, samples[i].pos);
        if odo - last_odo >= interval_m - DIST_EPS_M {
            starts.push((i, odo));
            last_odo = odo;
        }
    }
    let anchors = starts
        .iter()
        .enumerate()
        .map(|(k, &(i, o))| Anchor {
            frame_index: k,
            odometer_m: o,
            sample_index: i,
            segment_end: starts.get(k + 1).map_or(samples.len(), |s| s.0),
        })
        .collect();
    Ok(SamplingPlan { interval_m, anchors })
}

pub fn sample_frames(trip: &TripSeries, interval_m: f64) -> Result<SamplingPlan, FeatureError> {
    sample_samples(trip.samples(), interval_m)
}
