use serde::{Deserialize, Serialize};

use super::FeatureError;
use crate::dataset::TelemetrySample;

pub const KINEMATIC_NAMES: [&str; 9] = [
    "speed_now",
    "speed_mean",
    "speed_std",
    "accel_mean",
    "accel_std",
    "accel_min",
    "accel_max",
    "speed_dev_raw",
    "speed_dev_norm",
];

/// Speed and longitudinal-acceleration summary of one frame's segment.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct KinematicFeatures {
    pub speed_now: f64,
    pub speed_mean: f64,
    pub speed_std: f64,
    pub accel_mean: f64,
    pub accel_std: f64,
    pub accel_min: f64,
    pub accel_max: f64,
    /// Mean speed minus the speed limit, m/s.
    pub speed_dev_raw: f64,
    /// `speed_dev_raw / limit`.
    pub speed_dev_norm: f64,
}

impl KinematicFeatures {
    pub fn get(&self, name: &str) -> Option<f64> {
        Some(match name {
            "speed_now" => self.speed_now,
            "speed_mean" => self.speed_mean,
            "speed_std" => self.speed_std,
            "accel_mean" => self.accel_mean,
            "accel_std" => self.accel_std,
            "accel_min" => self.accel_min,
            "accel_max" => self.accel_max,
            "speed_dev_raw" => self.speed_dev_raw,
            "speed_dev_norm" => self.speed_dev_norm,
            _ => return None,
        })
    }

    /// Values in [`KINEMATIC_NAMES`] order.
    pub fn to_vec(&self) -> Vec<f64> {
        KINEMATIC_NAMES.iter().map(|n| self.get(n).unwrap()).collect()
    }
}

/// Population mean and standard deviation; exact for constant input.
fn mean_std(xs: impl Iterator<Item = f64> + Clone) -> (f64, f64) {
    let first = xs.clone().next().unwrap_or(0.0);
    if xs.clone().all(|x| x == first) {
        return (first, 0.0);
    }
    let n = xs.clone().count() as f64;
    let mean = xs.clone().sum::<f64>() / n;
    let var = xs.map(|x| (x - mean) * (x - mean)).sum::<f64>() / n;
    (mean, var.sqrt())
}

/// Features of one segment. `speed_now` is the first sample's speed.
pub fn kinematics(segment: &[TelemetrySample], speed_limit: f64) -> Result<KinematicFeatures, FeatureError> {
    if segment.is_empty() {
        return Err(FeatureError::EmptySegment);
    }
    if !(speed_limit.is_finite() && speed_limit > 0.0) {
        return Err(FeatureError::NonPositiveLimit(speed_limit));
    }
    let speeds = segment.iter().map(|s| s.speed);
    let accels = segment.iter().map(|s| s.accel_lon);
    let (speed_mean, speed_std) = mean_std(speeds.clone());
    let (accel_mean, accel_std) = mean_std(accels.clone());
    let accel_min = accels.clone().fold(f64::INFINITY, f64::min);
    let accel_max = accels.fold(f64::NEG_INFINITY, f64::max);
    let speed_min = speeds.clone().fold(f64::INFINITY, f64::min);
    let speed_max = speeds.fold(f64::NEG_INFINITY, f64::max);
    let speed_mean = speed_mean.clamp(speed_min, speed_max);
    let speed_dev_raw = speed_mean - speed_limit;
    Ok(KinematicFeatures {
        speed_now: segment[0].speed,
        speed_mean,
        speed_std,
        accel_mean: accel_mean.clamp(accel_min, accel_max),
        accel_std,
        accel_min,
        accel_max,
        speed_dev_raw,
        speed_dev_norm: speed_dev_raw / speed_limit,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geo::GeoPoint;
    use proptest::prelude::*;

    fn seg(speeds: &[f64], accels: &[f64]) -> Vec<TelemetrySample> {
        speeds
            .iter()
            .zip(accels)
            .enumerate()
            .map(|(i, (&speed, &accel_lon))| TelemetrySample {
                t: i as f64,
                pos: GeoPoint { lat: 42.0, lon: -71.0 },
                speed,
                accel_lon,
            })
            .collect()
    }

    #[test]
    fn deviation_from_limit() {
        let k = kinematics(&seg(&[10.0, 12.0, 14.0], &[0.0; 3]), 10.0).unwrap();
        assert_eq!(k.speed_mean, 12.0);
        assert_eq!(k.speed_dev_raw, 2.0);
        assert_eq!(k.speed_dev_norm, 0.2);
        assert_eq!(k.speed_now, 10.0);
    }

    #[test]
    fn constant_speed_at_limit() {
        let k = kinematics(&seg(&[10.0; 4], &[0.0; 4]), 10.0).unwrap();
        assert_eq!((k.speed_std, k.speed_dev_raw, k.speed_dev_norm), (0.0, 0.0, 0.0));
    }

    #[test]
    fn accel_extremes() {
        let k = kinematics(&seg(&[5.0; 3], &[-1.0, 0.0, 2.0]), 10.0).unwrap();
        assert_eq!((k.accel_min, k.accel_max), (-1.0, 2.0));
        assert!((k.accel_mean - 1.0 / 3.0).abs() < 1e-15);
    }

    #[test]
    fn single_sample_has_zero_spread() {
        let k = kinematics(&seg(&[7.0], &[0.3]), 10.0).unwrap();
        assert_eq!((k.speed_std, k.accel_std), (0.0, 0.0));
    }

    #[test]
    fn errors() {
        assert!(matches!(kinematics(&[], 10.0), Err(FeatureError::EmptySegment)));
        assert!(matches!(kinematics(&seg(&[1.0], &[0.0]), 0.0), Err(FeatureError::NonPositiveLimit(_))));
    }

    #[test]
    fn names_and_vector_agree() {
        let k = kinematics(&seg(&[10.0, 12.0], &[0.1, 0.2]), 11.0).unwrap();
        for (n, v) in KINEMATIC_NAMES.iter().zip(k.to_vec()) {
            assert_eq!(k.get(n), Some(v));
        }
        assert_eq!(k.get("nope"), None);
    }

    proptest! {
        #[test]
        fn constant_segments_match_closed_form(v in 0.0f64..40.0, a in -5.0f64..5.0, n in 1usize..50, limit in 1.0f64..40.0) {
            let k = kinematics(&seg(&vec![v; n], &vec![a; n]), limit).unwrap();
            prop_assert_eq!(k.speed_std, 0.0);
            prop_assert_eq!(k.accel_std, 0.0);
            prop_assert_eq!(k.accel_min, a);
            prop_assert_eq!(k.accel_max, a);
            prop_assert_eq!(k.accel_mean, a);
        }

        #[test]
        fn ordering(speeds in proptest::collection::vec(0.0f64..40.0, 1..30), seed in 0u64..1000) {
            let accels: Vec<f64> = speeds.iter().enumerate().map(|(i, s)| ((i as f64 + seed as f64) * 0.37).sin() * s / 10.0).collect();
            let k = kinematics(&seg(&speeds, &accels), 13.0).unwrap();
            prop_assert!(k.accel_min <= k.accel_mean && k.accel_mean <= k.accel_max);
            prop_assert!(k.speed_std >= 0.0 && k.accel_std >= 0.0);
        }
    }
}
