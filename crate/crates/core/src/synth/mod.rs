//! Deterministic synthetic world: trips, crashes, annotations and
//! complexity scores with a known latent structure, written in the ingest
//! file formats.
//!
//! A smooth latent surface `z ∈ [0, 1]` over a 16 km square drives every
//! signal. Crashes are sampled with intensity `z^exponent`, so the density
//! labels follow `z`. Each feature family is a noisy reading of `z` at the
//! frame, and the complexity index is a fixed link `g` of the features plus
//! noise (see [`SignalWeights`]).

mod field;
mod frames;

use std::collections::BTreeMap;
use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::dataset::{Scenario, TelemetrySample, TripSeries};
use crate::features::{kinematics, sample_frames, FeatureError, DEFAULT_INTERVAL_M};
use crate::geo::haversine_m;
use crate::ingest::{
    lookup_speed_limit, majority_vote, write_complexity, write_contextual_runs, write_crashes, write_semantic_summary,
    write_speed_limits, write_trip_index, write_trip_log, ComplexityScore, ComplexitySource, CrashRecord, IngestError,
    Road, RunAnswers, SemanticStats, SpeedLimitMap,
};
use crate::rng::SplitMix64;

pub use field::{sample_crashes, LatentCluster, LatentField, WORLD_ORIGIN, WORLD_SIZE_M};
pub use frames::{
    contextual_runs, dead_order, plant_low_variability, semantic_stats, FamilyEstimates, LinearProfile, SignalWeights,
    TripConditions, ACCEL_BASE, ACCEL_SLOPE, LEAD_PIXELS, SEMANTIC_PROFILES, SPEED_BASE, SPEED_SLOPE, TOTAL_PIXELS,
};

/// Telemetry rate.
pub const SAMPLE_DT_S: f64 = 0.1;
/// Crowd ratings sit this far above the machine link on average.
pub const CROWD_BIAS: f64 = 0.25;
pub const CROWD_NOISE: f64 = 1.0;
/// Heading random-walk standard deviation per 20 m of travel, radians.
const HEADING_SD: f64 = 0.08;
/// Trips turn around this close to the world edge.
const EDGE_M: f64 = 200.0;
/// Start points keep this far from the edge.
const START_MARGIN_M: f64 = 1000.0;
/// Hotspot trips start this close (standard deviation) to the strongest cluster.
const HOTSPOT_SPREAD_M: f64 = 300.0;
/// AR(1) coefficient of the speed disturbance per sample.
const SPEED_AR: f64 = 0.95;
/// Stationary speed disturbance as a fraction of the limit.
const SPEED_NOISE_FRAC: f64 = 0.25;
const MIN_SPEED: f64 = 0.5;
/// Road polylines keep every this many frame anchors.
const ROAD_STRIDE: usize = 5;
/// Samples kept after a trip's last frame.
const MAX_TAIL: usize = 5;

pub const TRIPS_DIR: &str = "trips";
pub const TRIP_INDEX: &str = "trips/index.csv";
pub const SEMANTIC_DIR: &str = "semantic";
pub const CONTEXTUAL_DIR: &str = "contextual";
pub const MACHINE_DIR: &str = "complexity/machine";
pub const CROWD_DIR: &str = "complexity/crowd";
pub const CRASHES_FILE: &str = "crashes.csv";
pub const SPEED_LIMITS_FILE: &str = "speed_limits.json";
pub const MANIFEST_FILE: &str = "manifest.json";

#[derive(Debug, Error)]
pub enum SynthError {
    #[error("invalid world config: {0}")]
    InvalidConfig(String),
    #[error("{path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error(transparent)]
    Ingest(#[from] IngestError),
    #[error(transparent)]
    Feature(#[from] FeatureError),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
    #[error("trip {trip_id}: generated {got} frames, expected {want}")]
    FrameCount { trip_id: String, got: usize, want: usize },
}

/// Crash and latent-surface parameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct CrashSpec {
    pub count: usize,
    /// Acceptance is `z^exponent`.
    pub exponent: f64,
    pub n_clusters: usize,
    /// Latent level away from every cluster.
    pub base: f64,
    pub amplitude: [f64; 2],
    pub spread_m: [f64; 2],
    /// Cluster centres keep this far from the edge.
    pub cluster_margin_m: f64,
    /// Inclusive year range.
    pub years: [i32; 2],
}

impl Default for CrashSpec {
    fn default() -> Self {
        Self {
            count: 4000,
            exponent: 3.0,
            n_clusters: 14,
            base: 0.08,
            amplitude: [0.35, 0.9],
            spread_m: [700.0, 2200.0],
            cluster_margin_m: 1500.0,
            years: [2018, 2022],
        }
    }
}

fn default_mix() -> BTreeMap<Scenario, f64> {
    BTreeMap::from([
        (Scenario::Highway, 0.20),
        (Scenario::Rural, 0.20),
        (Scenario::Urban, 0.20),
        (Scenario::Bridge, 0.15),
        (Scenario::Overpass, 0.15),
        (Scenario::Hotspot, 0.10),
    ])
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct WorldConfig {
    pub seed: u64,
    pub n_trips: usize,
    /// Total frames at the sampling interval, spread evenly over trips.
    pub frames_target: usize,
    pub sampling_interval_m: f64,
    pub scenario_mix: BTreeMap<Scenario, f64>,
    pub crashes: CrashSpec,
    /// Standard deviation of the machine score around the link.
    pub complexity_noise: f64,
    /// Scale of the speed and acceleration disturbances.
    pub kinematic_noise: f64,
    /// Share noise in units of each profile's slope.
    pub semantic_noise: f64,
    /// Probability that one annotation run misreports one answer.
    pub contextual_flip: f64,
    pub weights: SignalWeights,
    /// Candidate semantic features planted at 95% zeros.
    pub n_dead: usize,
}

impl Default for WorldConfig {
    fn default() -> Self {
        Self {
            seed: 7,
            n_trips: 50,
            frames_target: 10_000,
            sampling_interval_m: DEFAULT_INTERVAL_M,
            scenario_mix: default_mix(),
            crashes: CrashSpec::default(),
            complexity_noise: 0.5,
            kinematic_noise: 1.0,
            semantic_noise: 1.0,
            contextual_flip: 0.15,
            weights: SignalWeights::default(),
            n_dead: 33,
        }
    }
}

impl WorldConfig {
    pub fn validate(&self) -> Result<(), SynthError> {
        let bad = |m: String| Err(SynthError::InvalidConfig(m));
        if self.n_trips == 0 || self.frames_target < self.n_trips {
            return bad(format!("{} frames cannot cover {} trips", self.frames_target, self.n_trips));
        }
        if !(self.sampling_interval_m.is_finite() && self.sampling_interval_m > 0.0) {
            return bad(format!("sampling interval {}", self.sampling_interval_m));
        }
        let total: f64 = self.scenario_mix.values().sum();
        if self.scenario_mix.values().any(|p| !(p.is_finite() && *p >= 0.0)) || (total - 1.0).abs() > 1e-9 {
            return bad(format!("scenario mix must be non-negative and sum to 1, sums to {total}"));
        }
        for (name, v) in [
            ("complexity_noise", self.complexity_noise),
            ("kinematic_noise", self.kinematic_noise),
            ("semantic_noise", self.semantic_noise),
        ] {
            if !(v.is_finite() && v >= 0.0) {
                return bad(format!("{name} must be finite and >= 0, got {v}"));
            }
        }
        if !(0.0..=1.0).contains(&self.contextual_flip) {
            return bad(format!("contextual_flip {} outside [0, 1]", self.contextual_flip));
        }
        let w = &self.weights;
        if [w.semantic, w.kinematic, w.contextual].iter().any(|v| *v == 0.0 || !v.is_finite()) {
            return bad("every feature family needs a finite nonzero weight".into());
        }
        if ![w.intercept, w.quadratic, w.weather].iter().all(|v| v.is_finite()) {
            return bad("link weights must be finite".into());
        }
        let c = &self.crashes;
        if c.count == 0 || c.n_clusters == 0 {
            return bad("crash count and cluster count must be positive".into());
        }
        if !(c.exponent.is_finite() && c.exponent > 0.0) {
            return bad(format!("crash exponent {}", c.exponent));
        }
        let ordered = |r: [f64; 2]| r[0].is_finite() && r[1].is_finite() && 0.0 < r[0] && r[0] <= r[1];
        if !ordered(c.amplitude) || !ordered(c.spread_m) || !(0.0..1.0).contains(&c.base) {
            return bad("cluster amplitude and spread ranges must be positive and ordered".into());
        }
        if !(0.0..WORLD_SIZE_M / 2.0).contains(&c.cluster_margin_m) {
            return bad(format!("cluster margin {}", c.cluster_margin_m));
        }
        if c.years[0] > c.years[1] {
            return bad(format!("year range {:?}", c.years));
        }
        if self.n_dead >= crate::features::CANDIDATE_NAMES.len() {
            return bad(format!("n_dead {} must be below the candidate count", self.n_dead));
        }
        Ok(())
    }

    /// Trip scenarios: largest-remainder allocation of the mix, shuffled.
    fn scenarios(&self, rng: &mut SplitMix64) -> Vec<Scenario> {
        let n = self.n_trips as f64;
        let mut alloc: Vec<(Scenario, usize, f64)> =
            self.scenario_mix.iter().map(|(s, p)| (*s, (p * n).floor() as usize, p * n - (p * n).floor())).collect();
        let mut left = self.n_trips - alloc.iter().map(|a| a.1).sum::<usize>();
        let mut order: Vec<usize> = (0..alloc.len()).collect();
        order.sort_by(|&a, &b| alloc[b].2.total_cmp(&alloc[a].2).then(a.cmp(&b)));
        for i in order {
            if left == 0 {
                break;
            }
            alloc[i].1 += 1;
            left -= 1;
        }
        let mut out: Vec<Scenario> = alloc.iter().flat_map(|(s, k, _)| std::iter::repeat_n(*s, *k)).collect();
        rng.shuffle(&mut out);
        out
    }
}

/// Posted limit of a scenario's roads, m/s.
pub fn scenario_limit(s: Scenario) -> f64 {
    match s {
        Scenario::Highway => 29.1,
        Scenario::Rural => 20.1,
        Scenario::Urban => 13.4,
        Scenario::Bridge => 22.4,
        Scenario::Overpass => 24.6,
        Scenario::Hotspot => 15.6,
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TripLatent {
    pub trip_id: String,
    pub scenario: Scenario,
    pub limit_mps: f64,
    pub start_x: f64,
    pub start_y: f64,
    pub conditions: TripConditions,
}

/// Every latent quantity of one frame.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FrameLatent {
    pub trip_id: String,
    pub frame_index: usize,
    pub x: f64,
    pub y: f64,
    pub z: f64,
    pub limit_mps: f64,
    pub estimates: FamilyEstimates,
    /// The noiseless link value.
    pub g: f64,
    pub machine: f64,
    pub crowd_votes: [f64; 3],
}

/// Ground truth of a generated world.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub seed: u64,
    pub config: WorldConfig,
    pub origin: crate::geo::GeoPoint,
    pub world_size_m: f64,
    pub link: String,
    pub field: LatentField,
    pub live_features: Vec<String>,
    pub dead_features: Vec<String>,
    pub trips: Vec<TripLatent>,
    pub frames: Vec<FrameLatent>,
}

impl Manifest {
    pub fn read(path: &Path) -> Result<Self, SynthError> {
        let f = File::open(path).map_err(|e| SynthError::Io { path: path.to_path_buf(), source: e })?;
        Ok(serde_json::from_reader(std::io::BufReader::new(f))?)
    }

    /// Latent `z` keyed by `(trip_id, frame_index)`.
    pub fn latent_by_frame(&self) -> BTreeMap<(String, usize), &FrameLatent> {
        self.frames.iter().map(|f| ((f.trip_id.clone(), f.frame_index), f)).collect()
    }
}

/// Text form of the complexity link recorded in the manifest.
pub fn link_description() -> String {
    format!(
        "g = intercept + semantic*s + kinematic*k + contextual*c + quadratic*m^2 + weather*adverse; \
         s = mean((value - base)/slope) over live semantic profiles; \
         k = 0.5*({SPEED_BASE} - speed_dev_norm)/{SPEED_SLOPE} + 0.5*(accel_std - {ACCEL_BASE})/{ACCEL_SLOPE}; \
         c = mean(heavy traffic, reduced visibility, curved, narrow lanes, urban 1 | rural 0.5); \
         m = (s + k + c)/3; machine = clamp(g + N(0, complexity_noise), 0, 10); \
         crowd vote = clamp(round(g + {CROWD_BIAS} + N(0, {CROWD_NOISE})), 1, 10)"
    )
}

/// Per-trip annotation tables keyed by frame index.
#[derive(Debug, Clone, PartialEq)]
pub struct TripAnnotations {
    pub semantic: BTreeMap<usize, SemanticStats>,
    pub contextual: BTreeMap<usize, Vec<RunAnswers>>,
    pub machine: BTreeMap<usize, ComplexityScore>,
    pub crowd: BTreeMap<usize, ComplexityScore>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct World {
    pub trips: Vec<TripSeries>,
    pub annotations: Vec<TripAnnotations>,
    pub crashes: Vec<CrashRecord>,
    pub speed_limits: SpeedLimitMap,
    pub manifest: Manifest,
}

struct SimTrip {
    series: TripSeries,
    xy: Vec<(f64, f64)>,
    latent: TripLatent,
}

fn simulate_trip(
    cfg: &WorldConfig,
    field: &LatentField,
    trip_id: String,
    scenario: Scenario,
    n_frames: usize,
    rng: &mut SplitMix64,
) -> Result<SimTrip, SynthError> {
    let proj = field::projection();
    let limit = scenario_limit(scenario);
    let (mut x, mut y) = match (scenario, field.strongest()) {
        (Scenario::Hotspot, Some(c)) => (
            (c.x + rng.gaussian(0.0, HOTSPOT_SPREAD_M)).clamp(START_MARGIN_M, WORLD_SIZE_M - START_MARGIN_M),
            (c.y + rng.gaussian(0.0, HOTSPOT_SPREAD_M)).clamp(START_MARGIN_M, WORLD_SIZE_M - START_MARGIN_M),
        ),
        _ => (
            rng.uniform(START_MARGIN_M, WORLD_SIZE_M - START_MARGIN_M),
            rng.uniform(START_MARGIN_M, WORLD_SIZE_M - START_MARGIN_M),
        ),
    };
    let latent = TripLatent {
        trip_id: trip_id.clone(),
        scenario,
        limit_mps: limit,
        start_x: x,
        start_y: y,
        conditions: TripConditions::sample(rng),
    };
    let mut heading = rng.uniform(0.0, std::f64::consts::TAU);
    let speed_sd = SPEED_NOISE_FRAC * limit * cfg.kinematic_noise;
    let mut disturbance = rng.gaussian(0.0, speed_sd);
    let innovation = speed_sd * (1.0 - SPEED_AR * SPEED_AR).sqrt();

    let mut samples: Vec<TelemetrySample> = Vec::new();
    let mut xy = Vec::new();
    // Mirrors the frame sampler so the trip ends right after its last frame.
    let (mut odo, mut last_odo, mut anchors, mut tail) = (0.0, 0.0, 0usize, 0usize);
    let interval = cfg.sampling_interval_m;
    loop {
        let z = field.z(x, y);
        let speed = (limit * (1.02 - 0.45 * z) + disturbance).max(MIN_SPEED);
        let accel = rng.gaussian(0.0, (ACCEL_BASE + ACCEL_SLOPE * z) * cfg.kinematic_noise);
        let pos = field::to_geo(&proj, x, y);
        let sample = TelemetrySample { t: samples.len() as f64 * SAMPLE_DT_S, pos, speed, accel_lon: accel };
        match samples.last() {
            None => anchors = 1,
            Some(prev) => {
                let d = haversine_m(prev.pos, pos);
                if anchors == n_frames {
                    if tail == MAX_TAIL || (tail > 0 && odo + d - last_odo >= 0.9 * interval) {
                        break;
                    }
                    tail += 1;
                }
                odo += d;
                if odo - last_odo >= interval - 1e-9 {
                    anchors += 1;
                    last_odo = odo;
                }
            }
        }
        samples.push(sample);
        xy.push((x, y));
        let step = speed * SAMPLE_DT_S;
        heading += rng.gaussian(0.0, HEADING_SD * (step / 20.0).sqrt());
        x += step * heading.cos();
        y += step * heading.sin();
        if x.min(y) < EDGE_M || x.max(y) > WORLD_SIZE_M - EDGE_M {
            heading += std::f64::consts::PI;
        }
        disturbance = SPEED_AR * disturbance + rng.gaussian(0.0, innovation);
    }
    let series = TripSeries::new(trip_id, scenario, samples).map_err(|e| SynthError::InvalidConfig(e.to_string()))?;
    Ok(SimTrip { series, xy, latent })
}

/// Builds the whole world in memory.
pub fn generate_world(cfg: &WorldConfig) -> Result<World, SynthError> {
    cfg.validate()?;
    let field = LatentField::sample(&cfg.crashes, &mut SplitMix64::derive(cfg.seed, 1));
    let crashes = sample_crashes(&field, &cfg.crashes, &mut SplitMix64::derive(cfg.seed, 2));
    let scenarios = cfg.scenarios(&mut SplitMix64::derive(cfg.seed, 3));

    let base = cfg.frames_target / cfg.n_trips;
    let extra = cfg.frames_target % cfg.n_trips;
    let mut sims = Vec::with_capacity(cfg.n_trips);
    for (t, scenario) in scenarios.iter().enumerate() {
        let n_frames = base + usize::from(t < extra);
        let mut rng = SplitMix64::derive(cfg.seed, 1000 + t as u64);
        sims.push(simulate_trip(cfg, &field, format!("trip_{t:03}"), *scenario, n_frames, &mut rng)?);
    }

    let mut plans = Vec::with_capacity(sims.len());
    let mut roads = Vec::with_capacity(sims.len());
    for (t, sim) in sims.iter().enumerate() {
        let plan = sample_frames(&sim.series, cfg.sampling_interval_m)?;
        let want = base + usize::from(t < extra);
        if plan.len() != want {
            return Err(SynthError::FrameCount { trip_id: sim.latent.trip_id.clone(), got: plan.len(), want });
        }
        let samples = sim.series.samples();
        let mut points: Vec<[f64; 2]> = plan
            .anchors
            .iter()
            .step_by(ROAD_STRIDE)
            .map(|a| [samples[a.sample_index].pos.lat, samples[a.sample_index].pos.lon])
            .collect();
        let last = samples[samples.len() - 1].pos;
        points.push([last.lat, last.lon]);
        roads.push(Road { limit_mps: sim.latent.limit_mps, points });
        plans.push(plan);
    }
    let speed_limits = SpeedLimitMap { roads };

    let mut annotations = Vec::with_capacity(sims.len());
    let mut frame_latents = Vec::with_capacity(cfg.frames_target);
    let mut all_stats = Vec::with_capacity(cfg.frames_target);
    for (t, (sim, plan)) in sims.iter().zip(&plans).enumerate() {
        let mut rng = SplitMix64::derive(cfg.seed, 2000 + t as u64);
        let samples = sim.series.samples();
        let mut contextual = BTreeMap::new();
        for a in &plan.anchors {
            let (x, y) = sim.xy[a.sample_index];
            let z = field.z(x, y);
            let limit = lookup_speed_limit(&speed_limits, samples[a.sample_index].pos)?;
            let kin = kinematics(a.segment(samples), limit)?;
            let stats = semantic_stats(z, cfg.semantic_noise, &mut rng);
            let runs = contextual_runs(z, &sim.latent.conditions, cfg.contextual_flip, &mut rng);
            let record = majority_vote(&runs)?;
            let estimates = FamilyEstimates::from_features(&stats, &kin, &record);
            let g = cfg.weights.g(&estimates);
            let machine = (g + rng.gaussian(0.0, cfg.complexity_noise)).clamp(0.0, 10.0);
            let mut votes = [0.0; 3];
            for v in &mut votes {
                *v = (g + CROWD_BIAS + rng.gaussian(0.0, CROWD_NOISE)).round().clamp(1.0, 10.0);
            }
            all_stats.push(stats);
            contextual.insert(a.frame_index, runs);
            frame_latents.push(FrameLatent {
                trip_id: sim.latent.trip_id.clone(),
                frame_index: a.frame_index,
                x,
                y,
                z,
                limit_mps: limit,
                estimates,
                g,
                machine,
                crowd_votes: votes,
            });
        }
        annotations.push(TripAnnotations {
            semantic: BTreeMap::new(),
            contextual,
            machine: BTreeMap::new(),
            crowd: BTreeMap::new(),
        });
    }
    let dead = plant_low_variability(&mut all_stats, cfg.n_dead);
    let mut stats_iter = all_stats.into_iter();
    let mut latent_iter = frame_latents.iter();
    for (ann, plan) in annotations.iter_mut().zip(&plans) {
        for a in &plan.anchors {
            let stats = stats_iter.next().expect("one stats entry per frame");
            let latent = latent_iter.next().expect("one latent entry per frame");
            ann.semantic.insert(a.frame_index, stats);
            ann.machine.insert(a.frame_index, ComplexityScore::new(ComplexitySource::Machine, latent.machine, None));
            ann.crowd.insert(a.frame_index, ComplexityScore::from_votes(latent.crowd_votes));
        }
    }

    let live = crate::features::CANDIDATE_NAMES.iter().filter(|n| !dead.contains(n)).cloned().collect();
    let manifest = Manifest {
        seed: cfg.seed,
        config: cfg.clone(),
        origin: WORLD_ORIGIN,
        world_size_m: WORLD_SIZE_M,
        link: link_description(),
        field,
        live_features: live,
        dead_features: dead,
        trips: sims.iter().map(|s| s.latent.clone()).collect(),
        frames: frame_latents,
    };
    Ok(World { trips: sims.into_iter().map(|s| s.series).collect(), annotations, crashes, speed_limits, manifest })
}

fn create(path: &Path) -> Result<BufWriter<File>, SynthError> {
    if let Some(dir) = path.parent() {
        fs::create_dir_all(dir).map_err(|e| SynthError::Io { path: dir.to_path_buf(), source: e })?;
    }
    File::create(path).map(BufWriter::new).map_err(|e| SynthError::Io { path: path.to_path_buf(), source: e })
}

fn finish(mut w: BufWriter<File>, path: &Path) -> Result<(), SynthError> {
    w.flush().map_err(|e| SynthError::Io { path: path.to_path_buf(), source: e })
}

impl World {
    /// Writes the world under `dir`: trip logs and index, per-trip semantic,
    /// contextual and complexity files, crashes, speed limits and the
    /// manifest.
    pub fn write(&self, dir: &Path) -> Result<(), SynthError> {
        let index: BTreeMap<String, Scenario> =
            self.trips.iter().map(|t| (t.trip_id().to_string(), t.scenario())).collect();
        let path = dir.join(TRIP_INDEX);
        let mut w = create(&path)?;
        write_trip_index(&mut w, &index)?;
        finish(w, &path)?;
        for (trip, ann) in self.trips.iter().zip(&self.annotations) {
            let id = trip.trip_id();
            let path = dir.join(TRIPS_DIR).join(format!("{id}.csv"));
            let mut w = create(&path)?;
            write_trip_log(&mut w, trip)?;
            finish(w, &path)?;
            let path = dir.join(SEMANTIC_DIR).join(format!("{id}.json"));
            let mut w = create(&path)?;
            write_semantic_summary(&mut w, &ann.semantic)?;
            finish(w, &path)?;
            let path = dir.join(CONTEXTUAL_DIR).join(format!("{id}.json"));
            let mut w = create(&path)?;
            write_contextual_runs(&mut w, &ann.contextual)?;
            finish(w, &path)?;
            for (sub, scores, source) in [
                (MACHINE_DIR, &ann.machine, ComplexitySource::Machine),
                (CROWD_DIR, &ann.crowd, ComplexitySource::Crowd),
            ] {
                let path = dir.join(sub).join(format!("{id}.csv"));
                let mut w = create(&path)?;
                write_complexity(&mut w, scores, source)?;
                finish(w, &path)?;
            }
        }
        let path = dir.join(CRASHES_FILE);
        let mut w = create(&path)?;
        write_crashes(&mut w, &self.crashes)?;
        finish(w, &path)?;
        let path = dir.join(SPEED_LIMITS_FILE);
        let mut w = create(&path)?;
        write_speed_limits(&mut w, &self.speed_limits)?;
        finish(w, &path)?;
        let path = dir.join(MANIFEST_FILE);
        let mut w = create(&path)?;
        serde_json::to_writer_pretty(&mut w, &self.manifest)?;
        finish(w, &path)
    }
}
