//! Crash-density predictors and feature attribution.

pub mod attribution;
pub mod forest;
pub mod gbdt;
pub mod knn;
pub mod nn;
pub mod tree;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::dataset::FeatureMatrix;
use crate::features::FeatureError;
use crate::neural::NeuralError;

pub use attribution::{
    permutation_importance, shapley_exact, shapley_for_class, top_k_features, Attribution, AttributionMethod,
    DEFAULT_REPEATS, MAX_SHAPLEY_FEATURES, MIN_PERMUTATION_ROWS,
};
pub use forest::{predict_rf, train_rf, Forest, ForestConfig};
pub use gbdt::{predict_gbdt, train_gbdt, Gbdt, GbdtConfig};
pub use knn::{knn_predict, Knn, KnnConfig};
pub use nn::{build_prediction_nn, prediction_layers, NnConfig, PredictionNn};

/// Low, Medium, High.
pub const N_CLASSES: usize = 3;

#[derive(Debug, Error)]
pub enum ModelError {
    #[error("no training rows")]
    EmptyTrainSet,
    #[error("matrix has no train/test split")]
    NoSplit,
    #[error("{n} rows, at least {min} required")]
    TooFewRows { n: usize, min: usize },
    #[error("{0} features in the Shapley subset, at most 12 supported")]
    SubsetTooLarge(usize),
    #[error("invalid model configuration: {0}")]
    InvalidConfig(String),
    #[error("shape mismatch: {0}")]
    Shape(String),
    #[error(transparent)]
    Neural(#[from] NeuralError),
    #[error(transparent)]
    Feature(#[from] FeatureError),
    #[error("checkpoint: {0}")]
    Json(#[from] serde_json::Error),
}

/// Row-major training inputs with class indices.
#[derive(Debug, Clone, Copy)]
pub struct TrainingSet<'a> {
    pub x: &'a [f64],
    pub n: usize,
    pub d: usize,
    pub labels: &'a [usize],
}

impl<'a> TrainingSet<'a> {
    pub fn new(x: &'a [f64], d: usize, labels: &'a [usize]) -> Result<Self, ModelError> {
        let n = labels.len();
        if n == 0 {
            return Err(ModelError::EmptyTrainSet);
        }
        if x.len() != n * d {
            return Err(ModelError::Shape(format!("{} values for {n} rows of width {d}", x.len())));
        }
        if let Some(l) = labels.iter().find(|l| **l >= N_CLASSES) {
            return Err(ModelError::Shape(format!("label index {l}")));
        }
        Ok(Self { x, n, d, labels })
    }

    pub fn row(&self, i: usize) -> &'a [f64] {
        &self.x[i * self.d..(i + 1) * self.d]
    }
}

/// Gathers `rows` of `m` into row-major values and label indices.
pub fn gather_rows(m: &FeatureMatrix, rows: &[usize]) -> (Vec<f64>, Vec<usize>) {
    let labels = m.label_indices();
    let mut x = Vec::with_capacity(rows.len() * m.n_cols());
    for &i in rows {
        x.extend_from_slice(m.row(i));
    }
    (x, rows.iter().map(|&i| labels[i]).collect())
}

pub(crate) fn train_part(m: &FeatureMatrix) -> Result<(Vec<f64>, Vec<usize>), ModelError> {
    if m.split().is_none() {
        return Err(ModelError::NoSplit);
    }
    let rows = m.train_rows();
    if rows.is_empty() {
        return Err(ModelError::EmptyTrainSet);
    }
    Ok(gather_rows(m, &rows))
}

/// First index of the maximum; ties resolve to the lowest class.
pub fn argmax(v: &[f64]) -> usize {
    let mut best = 0;
    for (i, x) in v.iter().enumerate().skip(1) {
        if *x > v[best] {
            best = i;
        }
    }
    best
}

pub trait Classifier {
    fn n_features(&self) -> usize;

    /// Per-class score: vote share, neighbour share or probability.
    fn class_scores(&self, x: &[f64]) -> [f64; N_CLASSES];

    fn predict(&self, x: &[f64]) -> usize {
        argmax(&self.class_scores(x))
    }

    /// Predictions for `n` row-major rows.
    fn predict_batch(&self, x: &[f64], n: usize) -> Vec<usize> {
        let d = self.n_features();
        (0..n).map(|i| self.predict(&x[i * d..(i + 1) * d])).collect()
    }
}

/// Percentage of `pred` equal to `truth`.
pub fn accuracy_pct(pred: &[usize], truth: &[usize]) -> f64 {
    if truth.is_empty() {
        return 0.0;
    }
    let hits = pred.iter().zip(truth).filter(|(p, t)| p == t).count();
    100.0 * hits as f64 / truth.len() as f64
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ModelKind {
    Rf,
    Gbdt,
    Knn,
    Nn,
}

impl ModelKind {
    pub const ALL: [ModelKind; 4] = [ModelKind::Rf, ModelKind::Gbdt, ModelKind::Knn, ModelKind::Nn];

    pub fn as_str(self) -> &'static str {
        match self {
            ModelKind::Rf => "rf",
            ModelKind::Gbdt => "gbdt",
            ModelKind::Knn => "knn",
            ModelKind::Nn => "nn",
        }
    }

    pub fn label(self) -> &'static str {
        match self {
            ModelKind::Rf => "RF",
            ModelKind::Gbdt => "GBDT",
            ModelKind::Knn => "KNN",
            ModelKind::Nn => "NN",
        }
    }
}

impl std::str::FromStr for ModelKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        Self::ALL
            .into_iter()
            .find(|k| k.as_str() == s.to_ascii_lowercase())
            .ok_or_else(|| format!("unknown model `{s}` (expected rf, gbdt, knn or nn)"))
    }
}

/// Hyperparameters for every model family.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default)]
pub struct ModelConfigs {
    pub rf: ForestConfig,
    pub gbdt: GbdtConfig,
    pub knn: KnnConfig,
    pub nn: NnConfig,
}

impl ModelConfigs {
    /// Same configs with every seed replaced.
    pub fn with_seed(mut self, seed: u64) -> Self {
        self.rf.seed = seed;
        self.gbdt.seed = seed;
        self.nn.seed = seed;
        self
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "model", rename_all = "snake_case")]
pub enum TrainedModel {
    Rf(Forest),
    Gbdt(Gbdt),
    Knn(Knn),
    Nn(PredictionNn),
}

impl TrainedModel {
    /// Trains `kind` on the train rows of `m`.
    pub fn fit(kind: ModelKind, m: &FeatureMatrix, cfg: &ModelConfigs) -> Result<Self, ModelError> {
        Ok(match kind {
            ModelKind::Rf => TrainedModel::Rf(train_rf(m, &cfg.rf)?),
            ModelKind::Gbdt => TrainedModel::Gbdt(train_gbdt(m, &cfg.gbdt)?),
            ModelKind::Knn => TrainedModel::Knn(Knn::fit_matrix(m, &cfg.knn)?),
            ModelKind::Nn => TrainedModel::Nn(PredictionNn::fit_matrix(m, &cfg.nn)?),
        })
    }

    pub fn kind(&self) -> ModelKind {
        match self {
            TrainedModel::Rf(_) => ModelKind::Rf,
            TrainedModel::Gbdt(_) => ModelKind::Gbdt,
            TrainedModel::Knn(_) => ModelKind::Knn,
            TrainedModel::Nn(_) => ModelKind::Nn,
        }
    }

    fn inner(&self) -> &dyn Classifier {
        match self {
            TrainedModel::Rf(m) => m,
            TrainedModel::Gbdt(m) => m,
            TrainedModel::Knn(m) => m,
            TrainedModel::Nn(m) => m,
        }
    }

    /// Predictions for the given rows of `m`.
    pub fn predict_rows(&self, m: &FeatureMatrix, rows: &[usize]) -> Vec<usize> {
        let (x, _) = gather_rows(m, rows);
        self.predict_batch(&x, rows.len())
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("model serializes")
    }

    pub fn from_json(s: &str) -> Result<Self, ModelError> {
        Ok(serde_json::from_str(s)?)
    }
}

impl Classifier for TrainedModel {
    fn n_features(&self) -> usize {
        self.inner().n_features()
    }

    fn class_scores(&self, x: &[f64]) -> [f64; N_CLASSES] {
        self.inner().class_scores(x)
    }

    fn predict(&self, x: &[f64]) -> usize {
        self.inner().predict(x)
    }

    fn predict_batch(&self, x: &[f64], n: usize) -> Vec<usize> {
        self.inner().predict_batch(x, n)
    }
}

#[cfg(test)]
pub(crate) mod testdata {
    use crate::rng::SplitMix64;

    /// Three well separated Gaussian clusters in `d` dimensions; only the
    /// first two coordinates carry signal.
    pub fn clusters(n: usize, d: usize, sigma: f64, seed: u64) -> (Vec<f64>, Vec<usize>) {
        let centers = [[0.0, 0.0], [3.0, 0.0], [0.0, 3.0]];
        let mut r = SplitMix64::new(seed);
        let mut x = Vec::with_capacity(n * d);
        let mut y = Vec::with_capacity(n);
        for i in 0..n {
            let c = i % 3;
            for j in 0..d {
                let mu = centers[c].get(j).copied().unwrap_or(0.0);
                x.push(r.gaussian(mu, sigma));
            }
            y.push(c);
        }
        (x, y)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn argmax_ties_go_low() {
        assert_eq!(argmax(&[1.0, 1.0, 0.0]), 0);
        assert_eq!(argmax(&[0.0, 2.0, 2.0]), 1);
        assert_eq!(argmax(&[0.0, 0.0, 0.1]), 2);
    }

    #[test]
    fn model_kind_round_trip() {
        for k in ModelKind::ALL {
            assert_eq!(k.as_str().parse::<ModelKind>().unwrap(), k);
        }
        assert!("svm".parse::<ModelKind>().is_err());
    }

    #[test]
    fn training_set_checks() {
        assert!(matches!(TrainingSet::new(&[], 2, &[]), Err(ModelError::EmptyTrainSet)));
        assert!(TrainingSet::new(&[1.0], 2, &[0]).is_err());
        assert!(TrainingSet::new(&[1.0, 2.0], 2, &[3]).is_err());
    }
}
