//! Complexity-infused encoder: a single-hidden-layer network supervised by the
//! complexity index, whose post-ReLU hidden activations become extra
//! predictor features.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::dataset::{DatasetError, FeatureGroup, FeatureMatrix};
use crate::features::{FeatureError, MinMaxScaler};
use crate::ingest::ComplexitySource;
use crate::neural::{
    evaluate_loss, train, Activation, Checkpoint, History, LayerSpec, Loss, Network, NeuralError, Targets, TrainConfig,
    TrainData,
};

pub const CATEGORICAL_CLASSES: usize = 10;
pub const DEFAULT_EPOCHS: usize = 1000;

#[derive(Debug, Error)]
pub enum EncoderError {
    #[error("invalid encoder configuration: {0}")]
    InvalidConfig(String),
    #[error("complexity score {0} is outside [0, 10]")]
    OutOfRange(f64),
    #[error("matrix has no train/test split")]
    NoSplit,
    #[error("shape mismatch: {0}")]
    Shape(String),
    #[error(transparent)]
    Neural(#[from] NeuralError),
    #[error(transparent)]
    Feature(#[from] FeatureError),
    #[error(transparent)]
    Dataset(#[from] DatasetError),
    #[error("checkpoint: {0}")]
    Json(#[from] serde_json::Error),
}

/// Which feature families feed a model.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum InputSet {
    Semantic,
    SemanticKinematic,
    All,
}

impl InputSet {
    pub const ALL: [InputSet; 3] = [InputSet::Semantic, InputSet::SemanticKinematic, InputSet::All];

    pub fn groups(self) -> &'static [FeatureGroup] {
        match self {
            InputSet::Semantic => &[FeatureGroup::Semantic],
            InputSet::SemanticKinematic => &[FeatureGroup::Semantic, FeatureGroup::Kinematic],
            InputSet::All => &[FeatureGroup::Semantic, FeatureGroup::Kinematic, FeatureGroup::Contextual],
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            InputSet::Semantic => "semantic",
            InputSet::SemanticKinematic => "semantic_kinematic",
            InputSet::All => "all",
        }
    }

    pub fn label(self) -> &'static str {
        match self {
            InputSet::Semantic => "Semantic",
            InputSet::SemanticKinematic => "Semantic + Kinematic",
            InputSet::All => "All features",
        }
    }

    /// Columns of `m` in this set, in schema order.
    pub fn columns(self, m: &FeatureMatrix) -> Vec<String> {
        m.schema().columns().iter().filter(|c| self.groups().contains(&c.group)).map(|c| c.name.clone()).collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Head {
    /// One linear output regressed on the score.
    Continuous,
    /// Ten logits over the rounded score.
    Categorical,
}

impl Head {
    pub fn outputs(self) -> usize {
        match self {
            Head::Continuous => 1,
            Head::Categorical => CATEGORICAL_CLASSES,
        }
    }

    pub fn loss(self) -> Loss {
        match self {
            Head::Continuous => Loss::Rmse,
            Head::Categorical => Loss::CrossEntropy,
        }
    }

    pub fn short(self) -> &'static str {
        match self {
            Head::Continuous => "cont",
            Head::Categorical => "cat",
        }
    }
}

fn default_epochs() -> usize {
    DEFAULT_EPOCHS
}

fn default_momentum() -> f64 {
    0.9
}

fn default_batch() -> usize {
    64
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EncoderConfig {
    pub input_set: InputSet,
    pub hidden: usize,
    pub head: Head,
    pub source: ComplexitySource,
    #[serde(default = "default_epochs")]
    pub epochs: usize,
    /// Overrides the per-configuration default learning rate.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub lr: Option<f64>,
    #[serde(default = "default_momentum")]
    pub momentum: f64,
    #[serde(default = "default_batch")]
    pub batch_size: usize,
    pub seed: u64,
}

impl EncoderConfig {
    pub fn new(input_set: InputSet, hidden: usize, head: Head, source: ComplexitySource, seed: u64) -> Self {
        Self { input_set, hidden, head, source, epochs: DEFAULT_EPOCHS, lr: None, momentum: 0.9, batch_size: 64, seed }
    }

    pub fn validate(&self) -> Result<(), EncoderError> {
        if self.hidden != 16 && self.hidden != 32 {
            return Err(EncoderError::InvalidConfig(format!("hidden size {} is not 16 or 32", self.hidden)));
        }
        if self.source == ComplexitySource::Crowd && self.head == Head::Categorical {
            return Err(EncoderError::InvalidConfig("crowd scores are means and need the continuous head".into()));
        }
        Ok(())
    }

    pub fn lr(&self) -> f64 {
        self.lr.unwrap_or_else(|| default_lr(self.input_set, self.head))
    }

    pub fn train_config(&self) -> TrainConfig {
        TrainConfig {
            epochs: self.epochs,
            lr_max: self.lr(),
            lr_min: 0.0,
            momentum: self.momentum,
            batch_size: self.batch_size,
            seed: self.seed,
            loss: self.head.loss(),
        }
    }

    /// Short identifier such as `machine-32-cont-all`.
    pub fn name(&self) -> String {
        format!("{}-{}-{}-{}", self.source.as_str(), self.hidden, self.head.short(), self.input_set.as_str())
    }
}

/// Learning rate per input set and head.
pub fn default_lr(input_set: InputSet, head: Head) -> f64 {
    match (input_set, head) {
        (InputSet::Semantic, Head::Continuous) => 0.0005,
        (InputSet::Semantic, Head::Categorical) => 0.005,
        (InputSet::SemanticKinematic, Head::Continuous) => 0.0003,
        (InputSet::SemanticKinematic, Head::Categorical) => 0.001,
        (InputSet::All, Head::Continuous) => 0.0005,
        (InputSet::All, Head::Categorical) => 0.001,
    }
}

/// `input → hidden (ReLU) → head`.
pub fn build_encoder(cfg: &EncoderConfig, input_dim: usize, seed: u64) -> Result<Network, EncoderError> {
    cfg.validate()?;
    Ok(Network::init(
        vec![
            LayerSpec::new(input_dim, cfg.hidden, Activation::Relu),
            LayerSpec::new(cfg.hidden, cfg.head.outputs(), Activation::None),
        ],
        seed,
    )?)
}

/// Class index of the 10-way head: `clamp(round(score), 1, 10) − 1`.
pub fn complexity_to_class(score: f64) -> Result<usize, EncoderError> {
    if !(0.0..=10.0).contains(&score) {
        return Err(EncoderError::OutOfRange(score));
    }
    Ok((score.round() as usize).clamp(1, CATEGORICAL_CLASSES) - 1)
}

/// `ci_00 … ci_{h-1}`.
pub fn infused_names(hidden: usize) -> Vec<String> {
    (0..hidden).map(|i| format!("ci_{i:02}")).collect()
}

fn targets_for(head: Head, scores: &[f64], rows: &[usize]) -> Result<Targets, EncoderError> {
    Ok(match head {
        Head::Continuous => Targets::values(rows.iter().map(|&i| scores[i]).collect()),
        Head::Categorical => {
            Targets::Classes(rows.iter().map(|&i| complexity_to_class(scores[i])).collect::<Result<_, _>>()?)
        }
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EncoderMetrics {
    /// RMSE (continuous head) or mean cross-entropy (categorical head).
    pub train_loss: f64,
    pub test_loss: f64,
    /// Test accuracy in percent, categorical head only.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub test_accuracy: Option<f64>,
}

/// A trained encoder with the input columns and scaling it was fitted with.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainedEncoder {
    pub config: EncoderConfig,
    pub feature_names: Vec<String>,
    pub scaler: MinMaxScaler,
    pub network: Network,
    pub history: History,
}

#[derive(Serialize, Deserialize)]
struct EncoderFile {
    config: EncoderConfig,
    feature_names: Vec<String>,
    scaler: MinMaxScaler,
    network: Checkpoint,
    history: History,
}

impl TrainedEncoder {
    /// Trains on the train-flagged rows of `m`; `scores` holds the
    /// complexity index of every row.
    pub fn train(m: &FeatureMatrix, scores: &[f64], cfg: &EncoderConfig) -> Result<Self, EncoderError> {
        cfg.validate()?;
        if scores.len() != m.n_rows() {
            return Err(EncoderError::Shape(format!("{} scores for {} rows", scores.len(), m.n_rows())));
        }
        if m.split().is_none() {
            return Err(EncoderError::NoSplit);
        }
        let feature_names = cfg.input_set.columns(m);
        let sub = m.select(&feature_names)?;
        let scaler = MinMaxScaler::fit_train(&sub)?;
        let (train_rows, test_rows) = (sub.train_rows(), sub.test_rows());
        let data = TrainData {
            x_train: scaled_rows(&sub, &scaler, &train_rows)?,
            y_train: targets_for(cfg.head, scores, &train_rows)?,
            x_test: scaled_rows(&sub, &scaler, &test_rows)?,
            y_test: targets_for(cfg.head, scores, &test_rows)?,
        };
        let mut network = build_encoder(cfg, feature_names.len(), cfg.seed)?;
        let history = train(&mut network, &data, &cfg.train_config())?;
        Ok(Self { config: cfg.clone(), feature_names, scaler, network, history })
    }

    pub fn hidden(&self) -> usize {
        self.config.hidden
    }

    /// Rounds parameters to checkpoint precision, so a reloaded encoder
    /// behaves identically.
    pub fn quantize(&mut self) -> Result<(), EncoderError> {
        self.network = Checkpoint::from_network(&self.network, self.config.seed, None).to_network()?;
        Ok(())
    }

    fn inputs(&self, m: &FeatureMatrix, rows: &[usize]) -> Result<Vec<f64>, EncoderError> {
        let sub = m.select(&self.feature_names)?;
        scaled_rows(&sub, &self.scaler, rows)
    }

    /// Post-ReLU hidden activations for every row of `m`, row-major.
    pub fn extract(&self, m: &FeatureMatrix) -> Result<Vec<f64>, EncoderError> {
        let rows: Vec<usize> = (0..m.n_rows()).collect();
        let x = self.inputs(m, &rows)?;
        Ok(self.network.layer_output(&x, rows.len(), 0)?)
    }

    /// Hidden activations for one already scaled input row.
    pub fn extract_scaled(&self, x: &[f64]) -> Result<Vec<f64>, EncoderError> {
        Ok(self.network.layer_output(x, 1, 0)?)
    }

    /// `m` with the encoder's features appended as `ci_*` columns.
    pub fn append_to(&self, m: &FeatureMatrix) -> Result<FeatureMatrix, EncoderError> {
        let values = self.extract(m)?;
        Ok(m.append_columns(&infused_names(self.hidden()), FeatureGroup::ComplexityInfused, &values)?)
    }

    /// Eval-mode train and test loss on the split of `m`.
    pub fn evaluate(&self, m: &FeatureMatrix, scores: &[f64]) -> Result<EncoderMetrics, EncoderError> {
        if m.split().is_none() {
            return Err(EncoderError::NoSplit);
        }
        let loss = self.config.head.loss();
        let eval = |rows: &[usize]| -> Result<f64, EncoderError> {
            let x = self.inputs(m, rows)?;
            let t = targets_for(self.config.head, scores, rows)?;
            Ok(evaluate_loss(&self.network, &x, rows.len(), &t, loss)?.0)
        };
        let (train_rows, test_rows) = (m.train_rows(), m.test_rows());
        let test_accuracy = match self.config.head {
            Head::Continuous => None,
            Head::Categorical => {
                let x = self.inputs(m, &test_rows)?;
                let pred = self.network.predict_class(&x, test_rows.len())?;
                let hits = test_rows
                    .iter()
                    .zip(&pred)
                    .map(|(&i, &p)| complexity_to_class(scores[i]).map(|c| usize::from(c == p)))
                    .sum::<Result<usize, _>>()?;
                Some(100.0 * hits as f64 / test_rows.len().max(1) as f64)
            }
        };
        Ok(EncoderMetrics { train_loss: eval(&train_rows)?, test_loss: eval(&test_rows)?, test_accuracy })
    }

    pub fn to_json(&self) -> String {
        let f = EncoderFile {
            config: self.config.clone(),
            feature_names: self.feature_names.clone(),
            scaler: self.scaler.clone(),
            network: Checkpoint::from_network(&self.network, self.config.seed, Some(self.config.train_config())),
            history: self.history.clone(),
        };
        serde_json::to_string(&f).expect("encoder serializes")
    }

    pub fn from_json(s: &str) -> Result<Self, EncoderError> {
        let f: EncoderFile = serde_json::from_str(s)?;
        Ok(Self {
            network: f.network.to_network()?,
            config: f.config,
            feature_names: f.feature_names,
            scaler: f.scaler,
            history: f.history,
        })
    }
}

fn scaled_rows(m: &FeatureMatrix, scaler: &MinMaxScaler, rows: &[usize]) -> Result<Vec<f64>, EncoderError> {
    let mut out = Vec::with_capacity(rows.len() * m.n_cols());
    for &i in rows {
        out.extend(scaler.apply(m.row(i))?);
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn cfg(set: InputSet, hidden: usize, head: Head) -> EncoderConfig {
        EncoderConfig::new(set, hidden, head, ComplexitySource::Machine, 1)
    }

    #[test]
    fn shapes() {
        let n = build_encoder(&cfg(InputSet::Semantic, 32, Head::Continuous), 17, 0).unwrap();
        assert_eq!(n.dims(), vec![17, 32, 1]);
        let n = build_encoder(&cfg(InputSet::All, 16, Head::Categorical), 45, 0).unwrap();
        assert_eq!(n.dims(), vec![45, 16, 10]);
    }

    #[test]
    fn crowd_categorical_rejected() {
        let mut c = cfg(InputSet::All, 32, Head::Categorical);
        c.source = ComplexitySource::Crowd;
        assert!(matches!(build_encoder(&c, 45, 0), Err(EncoderError::InvalidConfig(_))));
        assert!(cfg(InputSet::All, 24, Head::Continuous).validate().is_err());
    }

    #[test]
    fn learning_rates() {
        assert_eq!(default_lr(InputSet::Semantic, Head::Continuous), 0.0005);
        assert_eq!(default_lr(InputSet::SemanticKinematic, Head::Categorical), 0.001);
        assert_eq!(default_lr(InputSet::All, Head::Continuous), 0.0005);
        assert_eq!(default_lr(InputSet::Semantic, Head::Categorical), 0.005);
        assert_eq!(default_lr(InputSet::SemanticKinematic, Head::Continuous), 0.0003);
        assert_eq!(default_lr(InputSet::All, Head::Categorical), 0.001);
    }

    #[test]
    fn class_mapping_is_total() {
        let got: Vec<usize> = (0..=10).map(|s| complexity_to_class(s as f64).unwrap()).collect();
        assert_eq!(got, vec![0, 0, 1, 2, 3, 4, 5, 6, 7, 8, 9]);
        assert!(complexity_to_class(10.01).is_err());
        assert!(complexity_to_class(-0.1).is_err());
    }

    #[test]
    fn names() {
        assert_eq!(infused_names(3), vec!["ci_00", "ci_01", "ci_02"]);
        assert_eq!(cfg(InputSet::All, 32, Head::Continuous).name(), "machine-32-cont-all");
    }

    #[test]
    fn zero_input_zero_bias_gives_zero_features() {
        let net = build_encoder(&cfg(InputSet::Semantic, 16, Head::Continuous), 4, 3).unwrap();
        assert!(net.layer_output(&[0.0; 4], 1, 0).unwrap().iter().all(|v| *v == 0.0));
    }
}
