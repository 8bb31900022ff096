use serde::{Deserialize, Serialize};

use super::{train_part, Classifier, ModelError, TrainingSet, N_CLASSES};
use crate::dataset::FeatureMatrix;
use crate::features::MinMaxScaler;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct KnnConfig {
    pub k: usize,
}

impl Default for KnnConfig {
    fn default() -> Self {
        Self { k: 5 }
    }
}

/// Vote counts among the `k` nearest rows of `train` (row-major, width `d`)
/// to `q`. Equal distances keep the earlier row.
pub fn knn_votes(train: &[f64], d: usize, labels: &[usize], q: &[f64], k: usize) -> [usize; N_CLASSES] {
    let k = k.min(labels.len()).max(1);
    let mut best: Vec<(f64, usize)> = Vec::with_capacity(k + 1);
    for (i, row) in train.chunks_exact(d).enumerate() {
        let dist: f64 = row.iter().zip(q).map(|(a, b)| (a - b) * (a - b)).sum();
        if best.len() == k && dist >= best[k - 1].0 {
            continue;
        }
        let at = best.partition_point(|(bd, _)| *bd <= dist);
        best.insert(at, (dist, i));
        best.truncate(k);
    }
    let mut votes = [0; N_CLASSES];
    for (_, i) in best {
        votes[labels[i]] += 1;
    }
    votes
}

/// Majority label of the `k` nearest rows; vote ties go to the lowest class.
pub fn knn_predict(train: &[f64], d: usize, labels: &[usize], q: &[f64], k: usize) -> usize {
    let v = knn_votes(train, d, labels, q, k);
    let mut best = 0;
    for c in 1..N_CLASSES {
        if v[c] > v[best] {
            best = c;
        }
    }
    best
}

/// Nearest-neighbour classifier over min-max-scaled rows; the scaler is
/// fitted on the training rows and applied to every query.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Knn {
    pub config: KnnConfig,
    pub scaler: MinMaxScaler,
    pub train: Vec<f64>,
    pub labels: Vec<usize>,
}

impl Knn {
    pub fn fit(data: &TrainingSet<'_>, cfg: &KnnConfig) -> Result<Self, ModelError> {
        if cfg.k == 0 {
            return Err(ModelError::InvalidConfig("k must be at least 1".into()));
        }
        let scaler = MinMaxScaler::fit((0..data.n).map(|i| data.row(i)))?;
        let mut train = Vec::with_capacity(data.x.len());
        for i in 0..data.n {
            train.extend(scaler.apply(data.row(i))?);
        }
        Ok(Self { config: cfg.clone(), scaler, train, labels: data.labels.to_vec() })
    }

    pub fn fit_matrix(m: &FeatureMatrix, cfg: &KnnConfig) -> Result<Self, ModelError> {
        let (x, y) = train_part(m)?;
        Self::fit(&TrainingSet::new(&x, m.n_cols(), &y)?, cfg)
    }
}

impl Classifier for Knn {
    fn n_features(&self) -> usize {
        self.scaler.dims()
    }

    fn class_scores(&self, x: &[f64]) -> [f64; N_CLASSES] {
        let q = self.scaler.apply(x).expect("query width matches the fitted scaler");
        let v = knn_votes(&self.train, self.n_features(), &self.labels, &q, self.config.k);
        let n: usize = v.iter().sum();
        v.map(|c| c as f64 / n as f64)
    }
}
