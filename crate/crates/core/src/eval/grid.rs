use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::metrics::{accuracy, mcnemar};
use super::report::{AblationRow, EncoderRow, GridReport, Hypothesis, MainRow, SourceRow};
use super::EvalError;
use crate::dataset::{FeatureGroup, FeatureMatrix, COMPLEXITY_INDEX, COMPLEXITY_INDEX_CROWD};
use crate::encoder::{infused_names, EncoderConfig, Head, InputSet, TrainedEncoder, DEFAULT_EPOCHS};
use crate::ingest::ComplexitySource;
use crate::models::{ModelConfigs, ModelKind, TrainedModel};

/// Significance level for the improvement hypothesis.
pub const ALPHA: f64 = 0.05;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Variant {
    Baseline,
    PlusInfused,
    InfusedAlone,
    PlusIndex,
}

impl Variant {
    pub const ALL: [Variant; 4] = [Variant::Baseline, Variant::PlusInfused, Variant::InfusedAlone, Variant::PlusIndex];

    pub fn as_str(self) -> &'static str {
        match self {
            Variant::Baseline => "baseline",
            Variant::PlusInfused => "plus_infused",
            Variant::InfusedAlone => "infused_alone",
            Variant::PlusIndex => "plus_index",
        }
    }

    pub fn needs_encoder(self) -> bool {
        matches!(self, Variant::PlusInfused | Variant::InfusedAlone)
    }
}

/// Encoder architecture and supervision, independent of its input set.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct EncoderVariant {
    pub hidden: usize,
    pub head: Head,
    pub source: ComplexitySource,
}

impl EncoderVariant {
    pub const MAIN: EncoderVariant =
        EncoderVariant { hidden: 32, head: Head::Continuous, source: ComplexitySource::Machine };

    pub fn label(&self) -> String {
        let head = match self.head {
            Head::Continuous => "1-d cont. output",
            Head::Categorical => "10-d cat. output",
        };
        format!("{} neurons, {head}", self.hidden)
    }

    pub fn config(&self, input_set: InputSet, epochs: usize, seed: u64) -> EncoderConfig {
        let mut c = EncoderConfig::new(input_set, self.hidden, self.head, self.source, seed);
        c.epochs = epochs;
        c
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentSpec {
    pub feature_set: InputSet,
    pub variant: Variant,
    pub model: ModelKind,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub encoder: Option<EncoderVariant>,
    pub seed: u64,
}

impl ExperimentSpec {
    pub fn validate(&self, encoders: &TrainedEncoders) -> Result<(), EvalError> {
        if self.variant.needs_encoder() {
            let enc = self
                .encoder
                .ok_or_else(|| EvalError::InvalidSpec(format!("{} needs an encoder", self.variant.as_str())))?;
            if encoders.get(enc, self.feature_set).is_none() {
                return Err(EvalError::InvalidSpec(format!(
                    "no {} encoder trained on the {} feature set",
                    enc.label(),
                    self.feature_set.as_str()
                )));
            }
        }
        Ok(())
    }
}

fn default_feature_sets() -> Vec<InputSet> {
    InputSet::ALL.to_vec()
}

fn default_models() -> Vec<ModelKind> {
    ModelKind::ALL.to_vec()
}

fn default_variants() -> Vec<Variant> {
    Variant::ALL.to_vec()
}

fn default_ablation_encoders() -> Vec<EncoderVariant> {
    vec![
        EncoderVariant { hidden: 16, head: Head::Continuous, source: ComplexitySource::Machine },
        EncoderVariant { hidden: 32, head: Head::Categorical, source: ComplexitySource::Machine },
    ]
}

fn default_encoder_epochs() -> usize {
    DEFAULT_EPOCHS
}

fn default_true() -> bool {
    true
}

fn default_ablation_model() -> ModelKind {
    ModelKind::Rf
}

fn default_index_source() -> ComplexitySource {
    ComplexitySource::Machine
}

fn default_main_encoder() -> EncoderVariant {
    EncoderVariant::MAIN
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridConfig {
    #[serde(default = "default_feature_sets")]
    pub feature_sets: Vec<InputSet>,
    #[serde(default = "default_models")]
    pub models: Vec<ModelKind>,
    #[serde(default = "default_variants")]
    pub variants: Vec<Variant>,
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_encoder_epochs")]
    pub encoder_epochs: usize,
    #[serde(default = "default_main_encoder")]
    pub main_encoder: EncoderVariant,
    /// Further machine-supervised encoders compared in the ablation tables.
    #[serde(default = "default_ablation_encoders")]
    pub ablation_encoders: Vec<EncoderVariant>,
    /// Train a crowd-supervised twin of the main encoder when crowd scores
    /// are available.
    #[serde(default = "default_true")]
    pub crowd_ablation: bool,
    /// Model used for the ablation tables.
    #[serde(default = "default_ablation_model")]
    pub ablation_model: ModelKind,
    /// Score appended by the `plus_index` variant.
    #[serde(default = "default_index_source")]
    pub index_source: ComplexitySource,
    #[serde(default)]
    pub model_configs: ModelConfigs,
}

impl Default for GridConfig {
    fn default() -> Self {
        serde_json::from_str("{}").expect("defaults deserialize")
    }
}

impl GridConfig {
    /// Every encoder the grid needs, main encoder first.
    pub fn encoder_variants(&self, crowd_available: bool) -> Vec<EncoderVariant> {
        let mut v = vec![self.main_encoder];
        for e in &self.ablation_encoders {
            if !v.contains(e) {
                v.push(*e);
            }
        }
        let crowd = EncoderVariant { source: ComplexitySource::Crowd, ..self.main_encoder };
        if self.crowd_ablation && crowd_available && !v.contains(&crowd) {
            v.push(crowd);
        }
        v
    }

    /// Grid cells in report order: feature set, model, variant.
    pub fn specs(&self) -> Vec<ExperimentSpec> {
        let mut out = Vec::new();
        for &fs in &self.feature_sets {
            for &model in &self.models {
                for &variant in &self.variants {
                    out.push(ExperimentSpec {
                        feature_set: fs,
                        variant,
                        model,
                        encoder: variant.needs_encoder().then_some(self.main_encoder),
                        seed: self.seed,
                    });
                }
            }
        }
        out
    }
}

/// Split matrix with the complexity scores of every row.
#[derive(Debug, Clone)]
pub struct GridData {
    pub matrix: FeatureMatrix,
    pub machine: Vec<f64>,
    pub crowd: Option<Vec<f64>>,
}

impl GridData {
    pub fn scores(&self, source: ComplexitySource) -> Result<&[f64], EvalError> {
        match source {
            ComplexitySource::Machine => Ok(&self.machine),
            ComplexitySource::Crowd => {
                self.crowd.as_deref().ok_or_else(|| EvalError::InvalidSpec("no crowd complexity scores".into()))
            }
        }
    }
}

#[derive(Debug, Clone, Default)]
pub struct TrainedEncoders {
    entries: Vec<(EncoderVariant, InputSet, TrainedEncoder)>,
}

impl TrainedEncoders {
    pub fn new() -> Self {
        Self::default()
    }

    /// Trains and quantizes one encoder per variant and feature set.
    pub fn train(
        data: &GridData,
        variants: &[EncoderVariant],
        feature_sets: &[InputSet],
        epochs: usize,
        seed: u64,
    ) -> Result<Self, EvalError> {
        let mut out = Self::new();
        for &v in variants {
            let scores = data.scores(v.source)?;
            for &fs in feature_sets {
                let mut enc = TrainedEncoder::train(&data.matrix, scores, &v.config(fs, epochs, seed))?;
                enc.quantize()?;
                out.insert(enc);
            }
        }
        Ok(out)
    }

    pub fn insert(&mut self, enc: TrainedEncoder) {
        let c = &enc.config;
        let key = EncoderVariant { hidden: c.hidden, head: c.head, source: c.source };
        let fs = c.input_set;
        self.entries.retain(|(v, f, _)| !(*v == key && *f == fs));
        self.entries.push((key, fs, enc));
    }

    pub fn get(&self, v: EncoderVariant, fs: InputSet) -> Option<&TrainedEncoder> {
        self.entries.iter().find(|(ev, f, _)| *ev == v && *f == fs).map(|(_, _, e)| e)
    }

    pub fn iter(&self) -> impl Iterator<Item = &TrainedEncoder> {
        self.entries.iter().map(|(_, _, e)| e)
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }
}

/// The matrix a grid cell trains on.
pub fn variant_matrix(
    base: &FeatureMatrix,
    feature_set: InputSet,
    variant: Variant,
    encoder: Option<&TrainedEncoder>,
    index: Option<(&str, &[f64])>,
) -> Result<FeatureMatrix, EvalError> {
    let baseline = base.select(&feature_set.columns(base))?;
    let need_encoder = || {
        let e = encoder.ok_or_else(|| EvalError::InvalidSpec(format!("{} needs an encoder", variant.as_str())))?;
        if e.config.input_set != feature_set {
            return Err(EvalError::InvalidSpec(format!(
                "encoder trained on {} used with {}",
                e.config.input_set.as_str(),
                feature_set.as_str()
            )));
        }
        Ok(e)
    };
    Ok(match variant {
        Variant::Baseline => baseline,
        Variant::PlusInfused => need_encoder()?.append_to(&baseline)?,
        Variant::InfusedAlone => {
            let e = need_encoder()?;
            e.append_to(&baseline)?.select(&infused_names(e.hidden()))?
        }
        Variant::PlusIndex => {
            let (name, values) =
                index.ok_or_else(|| EvalError::InvalidSpec("plus_index needs complexity scores".into()))?;
            baseline.append_columns(&[name.to_string()], FeatureGroup::ComplexityIndex, values)?
        }
    })
}

type CellKey = (InputSet, ModelKind, Variant, Option<EncoderVariant>);

struct Cells<'a> {
    data: &'a GridData,
    encoders: &'a TrainedEncoders,
    cfg: &'a GridConfig,
    labels: Vec<usize>,
    test_rows: Vec<usize>,
    done: BTreeMap<String, (f64, Vec<usize>)>,
}

impl Cells<'_> {
    fn key(k: &CellKey) -> String {
        let enc = k.3.map(|e| format!("{}-{}-{}", e.source.as_str(), e.hidden, e.head.short())).unwrap_or_default();
        format!("{}/{}/{}/{enc}", k.0.as_str(), k.1.as_str(), k.2.as_str())
    }

    /// Test accuracy and predictions, computed once per cell.
    fn run(&mut self, k: CellKey) -> Result<(f64, Vec<usize>), EvalError> {
        let id = Self::key(&k);
        if let Some(r) = self.done.get(&id) {
            return Ok(r.clone());
        }
        let (fs, model, variant, enc) = k;
        let spec = ExperimentSpec { feature_set: fs, variant, model, encoder: enc, seed: self.cfg.seed };
        spec.validate(self.encoders)?;
        let encoder = enc.and_then(|e| self.encoders.get(e, fs));
        let index_name = match self.cfg.index_source {
            ComplexitySource::Machine => COMPLEXITY_INDEX,
            ComplexitySource::Crowd => COMPLEXITY_INDEX_CROWD,
        };
        let index = match variant {
            Variant::PlusIndex => Some((index_name, self.data.scores(self.cfg.index_source)?)),
            _ => None,
        };
        let m = variant_matrix(&self.data.matrix, fs, variant, encoder, index)?;
        let cfg = self.cfg.model_configs.clone().with_seed(self.cfg.seed);
        let fitted = TrainedModel::fit(model, &m, &cfg)?;
        let preds = fitted.predict_rows(&m, &self.test_rows);
        let truth: Vec<usize> = self.test_rows.iter().map(|&i| self.labels[i]).collect();
        let acc = accuracy(&preds, &truth)?;
        self.done.insert(id, (acc, preds.clone()));
        Ok((acc, preds))
    }
}

fn encoder_row(enc: &TrainedEncoder, data: &GridData) -> Result<EncoderRow, EvalError> {
    let c = &enc.config;
    let metrics = enc.evaluate(&data.matrix, data.scores(c.source)?)?;
    Ok(EncoderRow {
        encoder: EncoderVariant { hidden: c.hidden, head: c.head, source: c.source }.label(),
        source: c.source,
        feature_set: c.input_set,
        train_loss: metrics.train_loss,
        test_loss: metrics.test_loss,
        test_accuracy: metrics.test_accuracy,
    })
}

/// Runs every cell of `cfg` plus the ablation tables. `encoders` must hold
/// every variant from [`GridConfig::encoder_variants`] for each feature set.
pub fn run_experiment_grid(
    data: &GridData,
    cfg: &GridConfig,
    encoders: &TrainedEncoders,
    config_hash: &str,
) -> Result<GridReport, EvalError> {
    if data.matrix.split().is_none() {
        return Err(EvalError::Dataset(crate::dataset::DatasetError::Shape("matrix has no split".into())));
    }
    let n = data.matrix.n_rows();
    if data.machine.len() != n || data.crowd.as_ref().is_some_and(|c| c.len() != n) {
        return Err(EvalError::InvalidSpec("complexity scores do not cover every row".into()));
    }
    let mut cells = Cells {
        data,
        encoders,
        cfg,
        labels: data.matrix.label_indices(),
        test_rows: data.matrix.test_rows(),
        done: BTreeMap::new(),
    };
    let main = Some(cfg.main_encoder);
    let variants = cfg.encoder_variants(data.crowd.is_some());

    let mut encoder_table = Vec::new();
    let mut source_encoders = Vec::new();
    for v in &variants {
        for &fs in &cfg.feature_sets {
            let Some(enc) = encoders.get(*v, fs) else {
                return Err(EvalError::InvalidSpec(format!("missing {} encoder for {}", v.label(), fs.as_str())));
            };
            let row = encoder_row(enc, data)?;
            if v.source == cfg.main_encoder.source {
                encoder_table.push(row.clone());
            }
            if v.hidden == cfg.main_encoder.hidden && v.head == cfg.main_encoder.head {
                source_encoders.push(row);
            }
        }
    }

    let mut main_rows = Vec::new();
    for &fs in &cfg.feature_sets {
        for &model in &cfg.models {
            let mut row = MainRow::empty(fs, model);
            for &variant in &cfg.variants {
                let enc = variant.needs_encoder().then_some(cfg.main_encoder);
                let (acc, _) = cells.run((fs, model, variant, enc))?;
                row.set(variant, acc);
            }
            if row.baseline.is_some() && row.plus_infused.is_some() {
                let (_, base) = cells.run((fs, model, Variant::Baseline, None))?;
                let (_, plus) = cells.run((fs, model, Variant::PlusInfused, main))?;
                let truth: Vec<usize> = cells.test_rows.iter().map(|&i| cells.labels[i]).collect();
                row.mcnemar = mcnemar(&base, &plus, &truth).ok();
            }
            main_rows.push(row);
        }
    }

    let am = cfg.ablation_model;
    let mut source_rows = Vec::new();
    for v in variants.iter().filter(|v| v.hidden == cfg.main_encoder.hidden && v.head == cfg.main_encoder.head) {
        for &fs in &cfg.feature_sets {
            source_rows.push(SourceRow {
                source: v.source,
                feature_set: fs,
                plus_infused: cells.run((fs, am, Variant::PlusInfused, Some(*v)))?.0,
                infused_alone: cells.run((fs, am, Variant::InfusedAlone, Some(*v)))?.0,
            });
        }
    }
    let mut ablation_rows = Vec::new();
    for v in variants.iter().filter(|v| v.source == cfg.main_encoder.source) {
        for &fs in &cfg.feature_sets {
            ablation_rows.push(AblationRow {
                encoder: v.label(),
                feature_set: fs,
                plus_infused: cells.run((fs, am, Variant::PlusInfused, Some(*v)))?.0,
            });
        }
    }

    let hyp_fs = if cfg.feature_sets.contains(&InputSet::All) {
        InputSet::All
    } else {
        *cfg.feature_sets.last().ok_or_else(|| EvalError::InvalidSpec("no feature sets".into()))?
    };
    let hypothesis = Hypothesis::judge(&main_rows, hyp_fs, am, ALPHA);

    Ok(GridReport {
        config_hash: config_hash.to_string(),
        seed: cfg.seed,
        split_seed: data.matrix.split_seed(),
        n_train: data.matrix.train_rows().len(),
        n_test: cells.test_rows.len(),
        model_configs: cfg.model_configs.clone().with_seed(cfg.seed),
        encoder_epochs: cfg.encoder_epochs,
        encoders: encoder_table,
        main: main_rows,
        source_encoders,
        source_accuracy: source_rows,
        encoder_ablation: ablation_rows,
        hypothesis,
    })
}
