//! Config-driven chain from input files to the experiment grid: ingest,
//! featurize, label, assemble, split, encoders, grid.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::dataset::{
    assemble_dataset, split_dataset, split_dataset_by_trip, DatasetError, FeatureSchema, FrameRecord, RowKey,
    TripSeries,
};
use crate::encoder::EncoderError;
use crate::eval::{config_hash, run_experiment_grid, EvalError, GridConfig, GridData, GridReport, TrainedEncoders};
use crate::features::{
    filter_low_variability, kinematics, sample_frames, semantic_features, semantic_names, ContextualEncoding,
    FeatureError, SemanticMode, DEFAULT_INTERVAL_M, ZERO_FRACTION_THRESHOLD,
};
use crate::ingest::{
    lookup_speed_limit, majority_vote, parse_complexity, parse_contextual_runs, parse_crashes, parse_semantic_summary,
    parse_speed_limits, parse_trip_index, parse_trip_log, ComplexityScore, ComplexitySource, CrashFile, IngestError,
    RunAnswers, SemanticStats, SpeedLimitMap, YearWindow,
};
use crate::kde::{label_frames, BinThresholds, DensityField, KdeError, DEFAULT_RADIUS_M};
use crate::models::ModelError;
use crate::synth::{self, SynthError, WorldConfig};

#[derive(Debug, Error)]
pub enum PipelineError {
    #[error("invalid config: {0}")]
    Config(String),
    #[error(transparent)]
    Ingest(#[from] IngestError),
    #[error(transparent)]
    Feature(#[from] FeatureError),
    #[error(transparent)]
    Kde(#[from] KdeError),
    #[error(transparent)]
    Dataset(#[from] DatasetError),
    #[error(transparent)]
    Encoder(#[from] EncoderError),
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Eval(#[from] EvalError),
    #[error(transparent)]
    Synth(#[from] SynthError),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

/// Input file locations. Per-trip files are `<dir>/<trip_id>.<ext>`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InputPaths {
    pub trip_index: PathBuf,
    pub trips_dir: PathBuf,
    pub semantic_dir: PathBuf,
    pub contextual_dir: PathBuf,
    pub machine_dir: PathBuf,
    /// Crowd scores are optional; without them the crowd ablation is skipped.
    pub crowd_dir: Option<PathBuf>,
    pub crashes: PathBuf,
    pub speed_limits: PathBuf,
}

impl InputPaths {
    /// The layout written by the world generator under `dir`.
    pub fn world(dir: &Path) -> Self {
        Self {
            trip_index: dir.join(synth::TRIP_INDEX),
            trips_dir: dir.join(synth::TRIPS_DIR),
            semantic_dir: dir.join(synth::SEMANTIC_DIR),
            contextual_dir: dir.join(synth::CONTEXTUAL_DIR),
            machine_dir: dir.join(synth::MACHINE_DIR),
            crowd_dir: Some(dir.join(synth::CROWD_DIR)),
            crashes: dir.join(synth::CRASHES_FILE),
            speed_limits: dir.join(synth::SPEED_LIMITS_FILE),
        }
    }
}

impl Default for InputPaths {
    fn default() -> Self {
        Self::world(Path::new("world"))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SplitConfig {
    pub seed: u64,
    pub train_frac: f64,
    /// Keep every frame of a trip on one side.
    pub by_trip: bool,
}

impl Default for SplitConfig {
    fn default() -> Self {
        Self { seed: 0, train_frac: 0.7, by_trip: false }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PipelineConfig {
    pub inputs: InputPaths,
    pub output_dir: PathBuf,
    pub sampling_interval_m: f64,
    pub kde_radius_m: f64,
    pub thresholds: BinThresholds,
    pub crash_years: YearWindow,
    pub semantic_mode: SemanticMode,
    /// Zero-fraction threshold of the low-variability filter.
    pub zero_threshold: f64,
    pub contextual: ContextualEncoding,
    pub split: SplitConfig,
    pub grid: GridConfig,
    /// World written by the `synth` command.
    pub synth: WorldConfig,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        Self {
            inputs: InputPaths::default(),
            output_dir: PathBuf::from("out"),
            sampling_interval_m: DEFAULT_INTERVAL_M,
            kde_radius_m: DEFAULT_RADIUS_M,
            thresholds: BinThresholds::default(),
            crash_years: YearWindow::default(),
            semantic_mode: SemanticMode::default(),
            zero_threshold: ZERO_FRACTION_THRESHOLD,
            contextual: ContextualEncoding::default(),
            split: SplitConfig::default(),
            grid: GridConfig::default(),
            synth: WorldConfig::default(),
        }
    }
}

impl PipelineConfig {
    pub fn from_json(s: &str) -> Result<Self, PipelineError> {
        let cfg: Self = serde_json::from_str(s)?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("config serializes")
    }

    /// Hex SHA-256 of the compact JSON form, without `output_dir` so a
    /// run can be reproduced into another directory under the same hash.
    pub fn hash(&self) -> String {
        config_hash(&Self { output_dir: PathBuf::new(), ..self.clone() })
    }

    pub fn validate(&self) -> Result<(), PipelineError> {
        let bad = |m: String| Err(PipelineError::Config(m));
        if !(self.sampling_interval_m.is_finite() && self.sampling_interval_m > 0.0) {
            return bad(format!("sampling_interval_m must be positive, got {}", self.sampling_interval_m));
        }
        if !(self.kde_radius_m.is_finite() && self.kde_radius_m > 0.0) {
            return bad(format!("kde_radius_m must be positive, got {}", self.kde_radius_m));
        }
        self.thresholds.validate()?;
        if !(0.0..=1.0).contains(&self.zero_threshold) {
            return bad(format!("zero_threshold {} outside [0, 1]", self.zero_threshold));
        }
        if !(self.split.train_frac > 0.0 && self.split.train_frac < 1.0) {
            return bad(format!("train_frac {} outside (0, 1)", self.split.train_frac));
        }
        self.contextual.validate()?;
        if self.crash_years.first > self.crash_years.last {
            return bad("crash_years.first is after crash_years.last".into());
        }
        Ok(())
    }

    /// Applies a `path.to.field=value` override. The value is parsed as JSON
    /// and taken as a plain string when that fails.
    pub fn set(&mut self, assignment: &str) -> Result<(), PipelineError> {
        let (path, raw) = assignment
            .split_once('=')
            .ok_or_else(|| PipelineError::Config(format!("override `{assignment}` is not key=value")))?;
        let value: serde_json::Value =
            serde_json::from_str(raw).unwrap_or_else(|_| serde_json::Value::String(raw.to_string()));
        let mut doc = serde_json::to_value(&*self)?;
        let mut node = &mut doc;
        for key in path.split('.') {
            node = node
                .as_object_mut()
                .and_then(|o| o.get_mut(key))
                .ok_or_else(|| PipelineError::Config(format!("unknown config field `{path}`")))?;
        }
        *node = value;
        *self = serde_json::from_value(doc).map_err(|e| PipelineError::Config(format!("`{path}`: {e}")))?;
        Ok(())
    }
}

/// Everything read from the input files.
#[derive(Debug, Clone)]
pub struct Inputs {
    pub trips: Vec<TripSeries>,
    pub semantic: BTreeMap<String, BTreeMap<usize, SemanticStats>>,
    pub contextual: BTreeMap<String, BTreeMap<usize, Vec<RunAnswers>>>,
    pub machine: BTreeMap<String, BTreeMap<usize, ComplexityScore>>,
    pub crowd: Option<BTreeMap<String, BTreeMap<usize, ComplexityScore>>>,
    pub crashes: CrashFile,
    pub speed_limits: SpeedLimitMap,
}

fn per_trip(dir: &Path, id: &str, ext: &str) -> PathBuf {
    dir.join(format!("{id}.{ext}"))
}

pub fn load_inputs(paths: &InputPaths, years: YearWindow) -> Result<Inputs, PipelineError> {
    let crashes = parse_crashes(&paths.crashes, years)?;
    let speed_limits = parse_speed_limits(&paths.speed_limits)?;
    speed_limits.validate()?;
    let index = parse_trip_index(&paths.trip_index)?;
    let mut inputs = Inputs {
        trips: Vec::with_capacity(index.len()),
        semantic: BTreeMap::new(),
        contextual: BTreeMap::new(),
        machine: BTreeMap::new(),
        crowd: paths.crowd_dir.as_ref().map(|_| BTreeMap::new()),
        crashes,
        speed_limits,
    };
    for (id, scenario) in &index {
        inputs.trips.push(parse_trip_log(&per_trip(&paths.trips_dir, id, "csv"), id, *scenario)?);
        let sem = parse_semantic_summary(&per_trip(&paths.semantic_dir, id, "json"))?;
        for (frame, s) in &sem {
            s.validate(*frame)?;
        }
        inputs.semantic.insert(id.clone(), sem);
        inputs.contextual.insert(id.clone(), parse_contextual_runs(&per_trip(&paths.contextual_dir, id, "json"))?);
        let machine = parse_complexity(&per_trip(&paths.machine_dir, id, "csv"), ComplexitySource::Machine)?;
        inputs.machine.insert(id.clone(), machine.scores);
        if let (Some(dir), Some(crowd)) = (&paths.crowd_dir, inputs.crowd.as_mut()) {
            let c = parse_complexity(&per_trip(dir, id, "csv"), ComplexitySource::Crowd)?;
            crowd.insert(id.clone(), c.scores);
        }
    }
    Ok(inputs)
}

/// Samples frames from every trip and attaches kinematic features and
/// whatever annotations exist for each frame.
pub fn featurize(inputs: &Inputs, interval_m: f64) -> Result<Vec<FrameRecord>, PipelineError> {
    let mut frames = Vec::new();
    for trip in &inputs.trips {
        let id = trip.trip_id();
        let plan = sample_frames(trip, interval_m)?;
        let samples = trip.samples();
        for a in &plan.anchors {
            let pos = samples[a.sample_index].pos;
            let mut f = FrameRecord::new(id, a.frame_index, pos, a.odometer_m);
            let limit = lookup_speed_limit(&inputs.speed_limits, pos)?;
            f.kinematic = Some(kinematics(a.segment(samples), limit)?);
            f.semantic = inputs.semantic.get(id).and_then(|m| m.get(&a.frame_index)).cloned();
            if let Some(runs) = inputs.contextual.get(id).and_then(|m| m.get(&a.frame_index)) {
                f.contextual = Some(majority_vote(runs)?);
            }
            f.complexity.machine = inputs.machine.get(id).and_then(|m| m.get(&a.frame_index)).cloned();
            f.complexity.crowd =
                inputs.crowd.as_ref().and_then(|c| c.get(id)).and_then(|m| m.get(&a.frame_index)).cloned();
            frames.push(f);
        }
    }
    Ok(frames)
}

/// Density field over the crash records, projected about their centroid.
pub fn density_field(crashes: &CrashFile, radius_m: f64) -> Result<DensityField, PipelineError> {
    let points = crashes.records.iter().map(|c| c.pos).collect();
    Ok(DensityField::centred(points, radius_m, synth::WORLD_ORIGIN)?)
}

/// Semantic columns for the configured mode; `auto` filters over `frames`.
pub fn semantic_columns(
    frames: &[FrameRecord],
    mode: SemanticMode,
    threshold: f64,
) -> Result<Vec<String>, PipelineError> {
    let names = semantic_names(mode);
    if mode != SemanticMode::Auto {
        return Ok(names);
    }
    let rows: Vec<Vec<f64>> =
        frames.iter().filter_map(|f| f.semantic.as_ref()).map(|s| semantic_features(s, &names)).collect();
    Ok(filter_low_variability(&names, &rows, threshold)?)
}

/// Complexity values of `source` in matrix row order.
fn scores_in_row_order(
    frames: &[FrameRecord],
    keys: &[RowKey],
    source: ComplexitySource,
) -> Result<Option<Vec<f64>>, PipelineError> {
    let by_key: BTreeMap<RowKey, &FrameRecord> = frames.iter().map(|f| (f.key(), f)).collect();
    let mut out = Vec::with_capacity(keys.len());
    for k in keys {
        let f = by_key[k];
        let s = match source {
            ComplexitySource::Machine => f.complexity.machine.as_ref(),
            ComplexitySource::Crowd => f.complexity.crowd.as_ref(),
        };
        match s {
            Some(s) => out.push(s.value),
            None if source == ComplexitySource::Crowd => return Ok(None),
            None => {
                return Err(DatasetError::MissingFeature {
                    trip_id: k.trip_id.clone(),
                    frame_index: k.frame_index,
                    name: "complexity_index".into(),
                }
                .into())
            }
        }
    }
    Ok(Some(out))
}

/// Labeled frames plus the split matrix and its complexity scores.
#[derive(Debug, Clone)]
pub struct Dataset {
    pub frames: Vec<FrameRecord>,
    pub grid: GridData,
}

/// Assembles and splits labeled frames.
pub fn assemble(frames: Vec<FrameRecord>, cfg: &PipelineConfig) -> Result<Dataset, PipelineError> {
    let semantic = semantic_columns(&frames, cfg.semantic_mode, cfg.zero_threshold)?;
    let schema = FeatureSchema::with_parts(semantic, &cfg.contextual);
    let m = assemble_dataset(&frames, &schema, &cfg.contextual)?;
    let m = if cfg.split.by_trip {
        split_dataset_by_trip(m, cfg.split.seed, cfg.split.train_frac)?
    } else {
        split_dataset(m, cfg.split.seed, cfg.split.train_frac)?
    };
    let machine = scores_in_row_order(&frames, m.keys(), ComplexitySource::Machine)?.expect("machine is required");
    let crowd = scores_in_row_order(&frames, m.keys(), ComplexitySource::Crowd)?;
    Ok(Dataset { frames, grid: GridData { matrix: m, machine, crowd } })
}

/// Ingest, featurize, label, assemble and split.
pub fn build_dataset(cfg: &PipelineConfig) -> Result<Dataset, PipelineError> {
    cfg.validate()?;
    let inputs = load_inputs(&cfg.inputs, cfg.crash_years)?;
    let mut frames = featurize(&inputs, cfg.sampling_interval_m)?;
    let field = density_field(&inputs.crashes, cfg.kde_radius_m)?;
    label_frames(&mut frames, &field, cfg.thresholds)?;
    assemble(frames, cfg)
}

/// Every encoder the grid needs.
pub fn train_encoders(data: &GridData, grid: &GridConfig) -> Result<TrainedEncoders, PipelineError> {
    let variants = grid.encoder_variants(data.crowd.is_some());
    Ok(TrainedEncoders::train(data, &variants, &grid.feature_sets, grid.encoder_epochs, grid.seed)?)
}

/// The full chain from input files to the grid report.
pub fn run_pipeline(cfg: &PipelineConfig) -> Result<(Dataset, TrainedEncoders, GridReport), PipelineError> {
    let ds = build_dataset(cfg)?;
    let encoders = train_encoders(&ds.grid, &cfg.grid)?;
    let report = run_experiment_grid(&ds.grid, &cfg.grid, &encoders, &cfg.hash())?;
    Ok((ds, encoders, report))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset::FeatureGroup;

    fn world(dir: &Path) -> PipelineConfig {
        let wc = WorldConfig { n_trips: 4, frames_target: 240, ..WorldConfig::default() };
        synth::generate_world(&wc).unwrap().write(dir).unwrap();
        PipelineConfig { inputs: InputPaths::world(dir), synth: wc, ..PipelineConfig::default() }
    }

    #[test]
    fn overrides() {
        let mut c = PipelineConfig::default();
        c.set("split.seed=9").unwrap();
        c.set("grid.encoder_epochs=3").unwrap();
        c.set("output_dir=elsewhere").unwrap();
        assert_eq!(c.split.seed, 9);
        assert_eq!(c.grid.encoder_epochs, 3);
        assert_eq!(c.output_dir, PathBuf::from("elsewhere"));
        assert!(matches!(c.set("split.nope=1"), Err(PipelineError::Config(_))));
        assert!(c.set("split.seed=\"x\"").is_err());
        let h = c.hash();
        c.set("output_dir=third").unwrap();
        assert_eq!(h, c.hash());
        c.set("split.seed=10").unwrap();
        assert_ne!(h, c.hash());
    }

    #[test]
    fn defaults_round_trip() {
        let c = PipelineConfig::default();
        assert_eq!(PipelineConfig::from_json(&c.to_json()).unwrap(), c);
        assert_eq!(PipelineConfig::from_json("{}").unwrap(), c);
        assert_eq!(c.sampling_interval_m, 20.0);
        assert_eq!(c.kde_radius_m, 1000.0);
    }

    #[test]
    fn world_to_matrix() {
        let dir = tempfile::tempdir().unwrap();
        let cfg = world(dir.path());
        let ds = build_dataset(&cfg).unwrap();
        let m = &ds.grid.matrix;
        assert_eq!(m.n_rows(), 240);
        assert_eq!(m.n_cols(), 45);
        assert_eq!(m.schema().count(FeatureGroup::Semantic), 17);
        assert_eq!(ds.grid.crowd.as_ref().unwrap().len(), 240);
        assert_eq!(m.train_rows().len(), 168);

        let manifest = synth::Manifest::read(&dir.path().join(synth::MANIFEST_FILE)).unwrap();
        let latent = manifest.latent_by_frame();
        for (k, &score) in m.keys().iter().zip(&ds.grid.machine) {
            assert_eq!(latent[&(k.trip_id.clone(), k.frame_index)].machine, score);
        }
        for f in &ds.frames {
            let est = synth::FamilyEstimates::from_features(
                f.semantic.as_ref().unwrap(),
                f.kinematic.as_ref().unwrap(),
                f.contextual.as_ref().unwrap(),
            );
            assert_eq!(latent[&(f.trip_id.clone(), f.frame_index)].estimates, est);
        }
    }

    #[test]
    fn auto_mode_recovers_live_names() {
        let dir = tempfile::tempdir().unwrap();
        let mut cfg = world(dir.path());
        cfg.semantic_mode = SemanticMode::Auto;
        let ds = build_dataset(&cfg).unwrap();
        let mut got = ds.grid.matrix.schema().group_names(FeatureGroup::Semantic);
        let mut want: Vec<String> = crate::features::STANDARD_NAMES.iter().map(|s| s.to_string()).collect();
        got.sort();
        want.sort();
        assert_eq!(got, want);
    }

    #[test]
    fn missing_crash_file_names_path() {
        let dir = tempfile::tempdir().unwrap();
        let cfg = world(dir.path());
        std::fs::remove_file(dir.path().join(synth::CRASHES_FILE)).unwrap();
        let err = build_dataset(&cfg).unwrap_err().to_string();
        assert!(err.contains("crashes.csv"), "{err}");
    }
}
