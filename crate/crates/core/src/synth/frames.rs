use serde::{Deserialize, Serialize};

use crate::features::{semantic_value, KinematicFeatures, CANDIDATE_NAMES, STANDARD_NAMES};
use crate::ingest::{ContextualRecord, Question, RunAnswers, SemanticStats, COUNTED_OBJECTS};
use crate::rng::SplitMix64;

pub const TOTAL_PIXELS: u64 = 1_000_000;
pub const LEAD_PIXELS: u64 = 200_000;

/// `value ≈ base + slope · z` for one live semantic feature.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LinearProfile {
    pub name: &'static str,
    pub base: f64,
    pub slope: f64,
}

const fn p(name: &'static str, base: f64, slope: f64) -> LinearProfile {
    LinearProfile { name, base, slope }
}

/// Profiles of the 17 live semantic features. Shares carry Gaussian noise
/// of `semantic_noise · |slope|`; counts are Poisson.
pub const SEMANTIC_PROFILES: [LinearProfile; 17] = [
    p("car_count", 1.0, 2.0),
    p("road", 0.30, -0.10),
    p("vegetation", 0.20, -0.15),
    p("sky", 0.15, -0.10),
    p("terrain", 0.06, -0.05),
    p("car", 0.03, 0.10),
    p("sidewalk", 0.01, 0.05),
    p("building", 0.03, 0.15),
    p("traffic_light", 0.002, 0.006),
    p("person", 0.001, 0.005),
    p("lead_car_traffic_sign", 0.002, 0.008),
    p("lead_car_road", 0.45, -0.15),
    p("lead_car_vegetation", 0.10, -0.08),
    p("lead_car_sky", 0.08, -0.06),
    p("lead_car_car", 0.10, 0.30),
    p("lead_car_fence", 0.005, 0.02),
    p("lead_car_car_count", 0.3, 1.0),
];

/// Mean of the counts of objects that carry no signal.
const FILLER_COUNT_MEAN: f64 = 2.0;
/// Share range of classes that carry no signal.
const FILLER_SHARE: [f64; 2] = [0.001, 0.01];

/// `kinematic estimate = ½ · (SPEED_BASE − speed_dev_norm) / SPEED_SLOPE +
/// ½ · (accel_std − ACCEL_BASE) / ACCEL_SLOPE`.
pub const SPEED_BASE: f64 = 0.02;
pub const SPEED_SLOPE: f64 = 0.45;
pub const ACCEL_BASE: f64 = 0.8;
pub const ACCEL_SLOPE: f64 = 0.4;

const WEATHER: [&str; 5] = ["clear", "rain", "snow", "fog", "overcast"];
const WEATHER_PRIOR: [f64; 5] = [0.60, 0.15, 0.05, 0.05, 0.15];
const NIGHT_PROB: f64 = 0.25;
/// Standard deviation of the latent reading behind each z-driven answer.
const CONTEXT_NOISE: f64 = 0.3;

/// Conditions fixed for a whole trip.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TripConditions {
    pub weather: String,
    pub night: bool,
}

impl TripConditions {
    pub fn sample(rng: &mut SplitMix64) -> Self {
        let weather = WEATHER[rng.categorical(&WEATHER_PRIOR)].to_string();
        Self { weather, night: rng.bernoulli(NIGHT_PROB) }
    }
}

fn share_pixels(share: f64, region: u64) -> u64 {
    (share.clamp(0.0, 1.0) * region as f64).round() as u64
}

/// Pixel statistics of a frame with latent `z`. Every one of the 50
/// candidates is generated; non-profile candidates are filler.
pub fn semantic_stats(z: f64, noise: f64, rng: &mut SplitMix64) -> SemanticStats {
    let mut s = SemanticStats::new(TOTAL_PIXELS, LEAD_PIXELS);
    for name in CANDIDATE_NAMES.iter() {
        let (rest, lead) = match name.strip_prefix("lead_car_") {
            Some(r) => (r, true),
            None => (name.as_str(), false),
        };
        let profile = SEMANTIC_PROFILES.iter().find(|p| p.name == name);
        if let Some(obj) = rest.strip_suffix("_count").filter(|o| COUNTED_OBJECTS.contains(o)) {
            let mean = profile.map_or(FILLER_COUNT_MEAN, |p| (p.base + p.slope * z).max(0.0));
            let counts = if lead { &mut s.counts_lead } else { &mut s.counts_full };
            counts.insert(obj.to_string(), rng.poisson(mean));
            continue;
        }
        let share = match profile {
            Some(p) => p.base + p.slope * z + rng.gaussian(0.0, noise * p.slope.abs()),
            None => rng.uniform(FILLER_SHARE[0], FILLER_SHARE[1]),
        };
        let (pixels, region) = if lead { (&mut s.lead_car, LEAD_PIXELS) } else { (&mut s.full, TOTAL_PIXELS) };
        pixels.insert(rest.to_string(), share_pixels(share, region));
    }
    fit_region(&mut s.full, TOTAL_PIXELS);
    fit_region(&mut s.lead_car, LEAD_PIXELS);
    s
}

/// Scales class pixels down so they fit in the region.
fn fit_region(pixels: &mut std::collections::BTreeMap<String, u64>, region: u64) {
    let sum: u64 = pixels.values().sum();
    if sum > region {
        let scale = region as f64 / sum as f64;
        for v in pixels.values_mut() {
            *v = (*v as f64 * scale).floor() as u64;
        }
    }
}

fn answer(levels: &[&str], truth: usize, flip: f64, rng: &mut SplitMix64) -> String {
    if !rng.bernoulli(flip) {
        return levels[truth].to_string();
    }
    let other = rng.below(levels.len() - 1);
    levels[if other >= truth { other + 1 } else { other }].to_string()
}

/// Three annotation runs. Each run reports the frame's true answer to a
/// question with probability `1 − flip`, otherwise a uniformly chosen other
/// level.
pub fn contextual_runs(z: f64, cond: &TripConditions, flip: f64, rng: &mut SplitMix64) -> Vec<RunAnswers> {
    let noisy = |rng: &mut SplitMix64, sd: f64| z + rng.gaussian(0.0, sd);
    let weather = WEATHER.iter().position(|w| *w == cond.weather).unwrap_or(0);
    let wet = matches!(cond.weather.as_str(), "rain" | "snow");
    let truth: Vec<(Question, &[&str], usize)> = vec![
        (Question::Weather, &WEATHER, weather),
        (Question::RoadCondition, &["dry", "wet"], wet as usize),
        (Question::TrafficCondition, &["light", "heavy"], (noisy(rng, CONTEXT_NOISE) > 0.45) as usize),
        (
            Question::Visibility,
            &["clear", "reduced"],
            (cond.weather == "fog" || noisy(rng, CONTEXT_NOISE) > 0.6) as usize,
        ),
        (Question::TimeOfDay, &["day", "night"], cond.night as usize),
        (Question::RoadLayout, &["straight", "curved"], (noisy(rng, CONTEXT_NOISE) > 0.4) as usize),
        (Question::RoadType, &["highway", "rural", "urban"], {
            let v = noisy(rng, CONTEXT_NOISE);
            if v > 0.5 {
                2
            } else if v > 0.25 {
                1
            } else {
                0
            }
        }),
        (Question::LaneWidth, &["standard", "narrow"], (noisy(rng, CONTEXT_NOISE) > 0.5) as usize),
    ];
    (0..3).map(|_| truth.iter().map(|(q, levels, t)| (*q, answer(levels, *t, flip, rng))).collect()).collect()
}

/// Per-family estimates of the latent surface, computed from the features
/// a pipeline run sees.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FamilyEstimates {
    /// Mean of `(value − base) / slope` over the live semantic profiles.
    pub semantic: f64,
    /// Speed deficit and acceleration spread, see [`SPEED_BASE`].
    pub kinematic: f64,
    /// Mean of five indicators: heavy traffic, reduced visibility, curved
    /// layout, narrow lanes, and road type (urban 1, rural ½, highway 0).
    pub contextual: f64,
    /// Weather other than clear.
    pub adverse_weather: bool,
}

impl FamilyEstimates {
    pub fn from_features(stats: &SemanticStats, kin: &KinematicFeatures, rec: &ContextualRecord) -> Self {
        let semantic =
            SEMANTIC_PROFILES.iter().map(|p| (semantic_value(stats, p.name) - p.base) / p.slope).sum::<f64>()
                / SEMANTIC_PROFILES.len() as f64;
        let kinematic =
            0.5 * (SPEED_BASE - kin.speed_dev_norm) / SPEED_SLOPE + 0.5 * (kin.accel_std - ACCEL_BASE) / ACCEL_SLOPE;
        let is = |q: Question, level: &str| (rec.answer(q) == Some(level)) as u8 as f64;
        let road_type = is(Question::RoadType, "urban") + 0.5 * is(Question::RoadType, "rural");
        let contextual = (is(Question::TrafficCondition, "heavy")
            + is(Question::Visibility, "reduced")
            + is(Question::RoadLayout, "curved")
            + is(Question::LaneWidth, "narrow")
            + road_type)
            / 5.0;
        let adverse_weather = rec.answer(Question::Weather).is_some_and(|w| w != "clear");
        Self { semantic, kinematic, contextual, adverse_weather }
    }

    pub fn mean(&self) -> f64 {
        (self.semantic + self.kinematic + self.contextual) / 3.0
    }
}

/// Coefficients of the complexity link
/// `g = intercept + semantic·ŝ + kinematic·k̂ + contextual·ĉ
///      + quadratic·m² + weather·1[adverse]`,
/// with `m` the mean of the three family estimates.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SignalWeights {
    pub intercept: f64,
    pub semantic: f64,
    pub kinematic: f64,
    pub contextual: f64,
    pub quadratic: f64,
    pub weather: f64,
}

impl Default for SignalWeights {
    fn default() -> Self {
        Self { intercept: 1.0, semantic: 5.0, kinematic: 2.5, contextual: 2.5, quadratic: 1.0, weather: 0.3 }
    }
}

impl SignalWeights {
    pub fn g(&self, e: &FamilyEstimates) -> f64 {
        let m = e.mean();
        self.intercept
            + self.semantic * e.semantic
            + self.kinematic * e.kinematic
            + self.contextual * e.contextual
            + self.quadratic * m * m
            + if e.adverse_weather { self.weather } else { 0.0 }
    }
}

/// Order in which candidates are planted dead: the 33 non-retained names in
/// candidate order, then the retained ones from last to first.
pub fn dead_order() -> Vec<String> {
    let mut out: Vec<String> =
        CANDIDATE_NAMES.iter().filter(|n| !STANDARD_NAMES.contains(&n.as_str())).cloned().collect();
    out.extend(STANDARD_NAMES.iter().rev().map(|s| s.to_string()));
    out
}

/// Zeroes the first `n_dead` names of [`dead_order`] in every frame except
/// the first `floor(0.05 · n)`, so each of them is 95% zeros. Returns the
/// names planted dead.
pub fn plant_low_variability(frames: &mut [SemanticStats], n_dead: usize) -> Vec<String> {
    let dead: Vec<String> = dead_order().into_iter().take(n_dead).collect();
    let keep = frames.len() * 5 / 100;
    for s in frames.iter_mut().skip(keep) {
        for name in &dead {
            let (rest, lead) = match name.strip_prefix("lead_car_") {
                Some(r) => (r, true),
                None => (name.as_str(), false),
            };
            match rest.strip_suffix("_count").filter(|o| COUNTED_OBJECTS.contains(o)) {
                Some(obj) => {
                    if lead { &mut s.counts_lead } else { &mut s.counts_full }.remove(obj);
                }
                None => {
                    if lead { &mut s.lead_car } else { &mut s.full }.remove(rest);
                }
            }
        }
    }
    dead
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::features::{filter_low_variability, semantic_features, ContextualEncoding};
    use crate::ingest::majority_vote;

    fn corpus(n: usize, n_dead: usize) -> (Vec<SemanticStats>, Vec<String>) {
        let mut rng = SplitMix64::new(11);
        let mut frames: Vec<SemanticStats> =
            (0..n).map(|i| semantic_stats((i % 10) as f64 / 10.0, 1.0, &mut rng)).collect();
        let dead = plant_low_variability(&mut frames, n_dead);
        (frames, dead)
    }

    fn retained(frames: &[SemanticStats], threshold: f64) -> Vec<String> {
        let rows: Vec<Vec<f64>> = frames.iter().map(|s| semantic_features(s, &CANDIDATE_NAMES)).collect();
        filter_low_variability(&CANDIDATE_NAMES, &rows, threshold).unwrap()
    }

    #[test]
    fn default_planting_recovers_the_live_names() {
        let (frames, dead) = corpus(400, 33);
        assert_eq!(dead.len(), 33);
        let kept = retained(&frames, 0.9);
        let mut want: Vec<String> = STANDARD_NAMES.iter().map(|s| s.to_string()).collect();
        want.sort();
        let mut got = kept.clone();
        got.sort();
        assert_eq!(got, want);
    }

    #[test]
    fn nothing_planted_keeps_all() {
        let (frames, dead) = corpus(400, 0);
        assert!(dead.is_empty());
        assert_eq!(retained(&frames, 0.9).len(), 50);
    }

    #[test]
    fn zero_threshold_keeps_never_zero_columns() {
        let (frames, _) = corpus(400, 33);
        let kept = retained(&frames, 0.0);
        for name in CANDIDATE_NAMES.iter() {
            let never_zero = frames.iter().all(|s| semantic_value(s, name) != 0.0);
            assert_eq!(kept.contains(name), never_zero, "{name}");
        }
        assert!(!kept.contains(&"lead_car_car_count".to_string()));
    }

    #[test]
    fn pixels_fit_their_regions() {
        let (frames, _) = corpus(300, 0);
        for (i, s) in frames.iter().enumerate() {
            s.validate(i).unwrap();
        }
    }

    #[test]
    fn semantic_estimate_increases_with_latent() {
        let mut rng = SplitMix64::new(3);
        let kin = crate::features::kinematics(
            &[crate::dataset::TelemetrySample {
                t: 0.0,
                pos: crate::geo::GeoPoint { lat: 42.0, lon: -71.0 },
                speed: 10.0,
                accel_lon: 0.0,
            }],
            10.0,
        )
        .unwrap();
        let rec = crate::features::default_record();
        let mean_at = |z: f64, rng: &mut SplitMix64| {
            (0..300)
                .map(|_| FamilyEstimates::from_features(&semantic_stats(z, 1.0, rng), &kin, &rec).semantic)
                .sum::<f64>()
                / 300.0
        };
        let lo = mean_at(0.1, &mut rng);
        let hi = mean_at(0.8, &mut rng);
        // Shares clamped at zero bias the low end upward.
        assert!(hi - lo > 0.45 && hi - lo < 0.8, "{lo} {hi}");
    }

    #[test]
    fn contextual_runs_vote_and_encode() {
        let mut rng = SplitMix64::new(5);
        let cond = TripConditions { weather: "fog".into(), night: true };
        let runs = contextual_runs(0.9, &cond, 0.0, &mut rng);
        let rec = majority_vote(&runs).unwrap();
        assert_eq!(rec.answer(Question::Weather), Some("fog"));
        assert_eq!(rec.answer(Question::Visibility), Some("reduced"));
        assert_eq!(rec.answer(Question::TimeOfDay), Some("night"));
        let row = ContextualEncoding::default().one_hot(&rec).unwrap();
        assert_eq!(row.iter().sum::<f64>(), 8.0);
    }

    #[test]
    fn link_is_documented_form() {
        let w = SignalWeights::default();
        let e = FamilyEstimates { semantic: 0.5, kinematic: 0.2, contextual: 0.8, adverse_weather: true };
        let m: f64 = 0.5;
        let want = 1.0 + 5.0 * 0.5 + 2.5 * 0.2 + 2.5 * 0.8 + m * m + 0.3;
        assert!((w.g(&e) - want).abs() < 1e-12);
    }
}
