use serde::{Deserialize, Serialize};

use super::CrashSpec;
use crate::geo::{GeoPoint, LocalProjection};
use crate::ingest::CrashRecord;
use crate::rng::SplitMix64;

/// Side of the square world, metres.
pub const WORLD_SIZE_M: f64 = 16_000.0;
/// Centre of the world.
pub const WORLD_ORIGIN: GeoPoint = GeoPoint { lat: 42.30, lon: -71.40 };

/// One Gaussian bump of the latent complexity surface.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LatentCluster {
    pub x: f64,
    pub y: f64,
    pub lat: f64,
    pub lon: f64,
    pub amplitude: f64,
    pub spread_m: f64,
}

/// `z(x, y) = clamp(base + Σ a·exp(−d²/2s²), 0, 1)` over planar coordinates
/// in `[0, WORLD_SIZE_M]²`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LatentField {
    pub base: f64,
    pub clusters: Vec<LatentCluster>,
}

impl LatentField {
    pub fn sample(spec: &CrashSpec, rng: &mut SplitMix64) -> Self {
        let proj = projection();
        let margin = spec.cluster_margin_m;
        let clusters = (0..spec.n_clusters)
            .map(|_| {
                let x = rng.uniform(margin, WORLD_SIZE_M - margin);
                let y = rng.uniform(margin, WORLD_SIZE_M - margin);
                let p = to_geo(&proj, x, y);
                LatentCluster {
                    x,
                    y,
                    lat: p.lat,
                    lon: p.lon,
                    amplitude: rng.uniform(spec.amplitude[0], spec.amplitude[1]),
                    spread_m: rng.uniform(spec.spread_m[0], spec.spread_m[1]),
                }
            })
            .collect();
        Self { base: spec.base, clusters }
    }

    pub fn z(&self, x: f64, y: f64) -> f64 {
        let bumps: f64 = self
            .clusters
            .iter()
            .map(|c| {
                let d2 = (x - c.x).powi(2) + (y - c.y).powi(2);
                c.amplitude * (-d2 / (2.0 * c.spread_m * c.spread_m)).exp()
            })
            .sum();
        (self.base + bumps).clamp(0.0, 1.0)
    }

    /// The cluster with the largest amplitude, first on ties.
    pub fn strongest(&self) -> Option<&LatentCluster> {
        self.clusters.iter().fold(None, |best: Option<&LatentCluster>, c| match best {
            Some(b) if b.amplitude >= c.amplitude => Some(b),
            _ => Some(c),
        })
    }
}

pub(crate) fn projection() -> LocalProjection {
    LocalProjection::new(WORLD_ORIGIN)
}

pub(crate) fn to_geo(proj: &LocalProjection, x: f64, y: f64) -> GeoPoint {
    let half = WORLD_SIZE_M / 2.0;
    proj.unproject(x - half, y - half)
}

/// Rejection sampling in the plane with acceptance `z^exponent`, so crash
/// density is increasing in the latent surface.
pub fn sample_crashes(field: &LatentField, spec: &CrashSpec, rng: &mut SplitMix64) -> Vec<CrashRecord> {
    let proj = projection();
    let mut out = Vec::with_capacity(spec.count);
    while out.len() < spec.count {
        let x = rng.uniform(0.0, WORLD_SIZE_M);
        let y = rng.uniform(0.0, WORLD_SIZE_M);
        if rng.next_f64() < field.z(x, y).powf(spec.exponent) {
            let span = (spec.years[1] - spec.years[0] + 1) as usize;
            let year = spec.years[0] + rng.below(span) as i32;
            out.push(CrashRecord { pos: to_geo(&proj, x, y), year });
        }
    }
    out
}
