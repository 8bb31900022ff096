use serde::{Deserialize, Serialize};

use super::tree::{grow, BinnedMatrix, GrowParams, Tree};
use super::{argmax, train_part, Classifier, ModelError, TrainingSet, N_CLASSES};
use crate::dataset::FeatureMatrix;
use crate::neural::softmax_in_place;

/// Floor for the prior of a class absent from training.
const MIN_PRIOR: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct GbdtConfig {
    pub n_rounds: usize,
    pub learning_rate: f64,
    pub max_depth: usize,
    pub seed: u64,
}

impl Default for GbdtConfig {
    fn default() -> Self {
        Self { n_rounds: 150, learning_rate: 0.1, max_depth: 3, seed: 0 }
    }
}

impl GbdtConfig {
    /// A zero learning rate is accepted: the model then predicts the prior.
    pub fn validate(&self) -> Result<(), ModelError> {
        if !(0.0..=1.0).contains(&self.learning_rate) {
            return Err(ModelError::InvalidConfig("learning_rate must be in [0, 1]".into()));
        }
        if self.max_depth == 0 {
            return Err(ModelError::InvalidConfig("max_depth must be at least 1".into()));
        }
        Ok(())
    }
}

/// Multinomial gradient boosting: one regression tree per class per round,
/// fitted to the softmax residual with Newton-step leaves.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Gbdt {
    pub config: GbdtConfig,
    pub n_features: usize,
    /// Log class priors the scores start from.
    pub init: [f64; N_CLASSES],
    /// `rounds[r][k]` is the tree for class `k` in round `r`.
    pub rounds: Vec<Vec<Tree>>,
    /// Mean train cross-entropy before the first round and after each round.
    pub train_loss: Vec<f64>,
}

fn cross_entropy(scores: &[f64], labels: &[usize]) -> f64 {
    let mut total = 0.0;
    let mut p = [0.0; N_CLASSES];
    for (i, &l) in labels.iter().enumerate() {
        p.copy_from_slice(&scores[i * N_CLASSES..(i + 1) * N_CLASSES]);
        softmax_in_place(&mut p);
        total -= p[l].max(f64::MIN_POSITIVE).ln();
    }
    total / labels.len() as f64
}

impl Gbdt {
    pub fn fit(data: &TrainingSet<'_>, cfg: &GbdtConfig) -> Result<Self, ModelError> {
        cfg.validate()?;
        let binned = BinnedMatrix::new(data.x, data.n, data.d);
        let mut counts = [0.0; N_CLASSES];
        for &l in data.labels {
            counts[l] += 1.0;
        }
        let init = counts.map(|c| (c / data.n as f64).max(MIN_PRIOR).ln());
        let mut scores: Vec<f64> = (0..data.n).flat_map(|_| init).collect();
        let mut train_loss = vec![cross_entropy(&scores, data.labels)];
        let mut rounds = Vec::with_capacity(cfg.n_rounds);
        let mut residual = vec![0.0; data.n];
        let mut probs = vec![0.0; data.n * N_CLASSES];
        let k = N_CLASSES as f64;
        for _ in 0..cfg.n_rounds {
            probs.copy_from_slice(&scores);
            for p in probs.chunks_mut(N_CLASSES) {
                softmax_in_place(p);
            }
            let mut trees = Vec::with_capacity(N_CLASSES);
            for c in 0..N_CLASSES {
                for i in 0..data.n {
                    residual[i] = f64::from(u8::from(data.labels[i] == c)) - probs[i * N_CLASSES + c];
                }
                let leaf = |rows: &[u32]| {
                    let (mut num, mut den) = (0.0, 0.0);
                    for &r in rows {
                        let g = residual[r as usize];
                        num += g;
                        den += g.abs() * (1.0 - g.abs());
                    }
                    let v = if den > 1e-12 { (k - 1.0) / k * num / den } else { 0.0 };
                    vec![v]
                };
                let tree = grow(
                    &binned,
                    (0..data.n as u32).collect(),
                    &residual,
                    1,
                    GrowParams { max_depth: cfg.max_depth, min_leaf: 1, max_features: None, rng: None },
                    &leaf,
                );
                trees.push(tree);
            }
            for (i, s) in scores.chunks_mut(N_CLASSES).enumerate() {
                for (c, t) in trees.iter().enumerate() {
                    s[c] += cfg.learning_rate * t.leaf_value(data.row(i))[0];
                }
            }
            train_loss.push(cross_entropy(&scores, data.labels));
            rounds.push(trees);
        }
        Ok(Self { config: cfg.clone(), n_features: data.d, init, rounds, train_loss })
    }

    /// Summed class scores before the softmax.
    pub fn raw_scores(&self, x: &[f64]) -> [f64; N_CLASSES] {
        let mut s = self.init;
        for trees in &self.rounds {
            for (c, t) in trees.iter().enumerate() {
                s[c] += self.config.learning_rate * t.leaf_value(x)[0];
            }
        }
        s
    }
}

impl Classifier for Gbdt {
    fn n_features(&self) -> usize {
        self.n_features
    }

    fn class_scores(&self, x: &[f64]) -> [f64; N_CLASSES] {
        let mut s = self.raw_scores(x);
        softmax_in_place(&mut s);
        s
    }

    fn predict(&self, x: &[f64]) -> usize {
        argmax(&self.raw_scores(x))
    }
}

pub fn train_gbdt(m: &FeatureMatrix, cfg: &GbdtConfig) -> Result<Gbdt, ModelError> {
    let (x, y) = train_part(m)?;
    Gbdt::fit(&TrainingSet::new(&x, m.n_cols(), &y)?, cfg)
}

pub fn predict_gbdt(model: &Gbdt, row: &[f64]) -> usize {
    model.predict(row)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::models::accuracy_pct;
    use crate::models::testdata::clusters;

    #[test]
    fn one_stump_separates_two_classes() {
        let x: Vec<f64> = (0..40).map(|i| i as f64).collect();
        let y: Vec<usize> = (0..40).map(|i| usize::from(i >= 20)).collect();
        let cfg = GbdtConfig { n_rounds: 1, learning_rate: 1.0, max_depth: 1, seed: 0 };
        let m = Gbdt::fit(&TrainingSet::new(&x, 1, &y).unwrap(), &cfg).unwrap();
        assert_eq!(accuracy_pct(&m.predict_batch(&x, 40), &y), 100.0);
    }

    #[test]
    fn zero_rate_predicts_majority() {
        let (x, _) = clusters(30, 2, 1.0, 1);
        let y: Vec<usize> = (0..30).map(|i| if i % 3 == 0 { 2 } else { 1 }).collect();
        let cfg = GbdtConfig { n_rounds: 5, learning_rate: 0.0, ..GbdtConfig::default() };
        let m = Gbdt::fit(&TrainingSet::new(&x, 2, &y).unwrap(), &cfg).unwrap();
        assert!(m.predict_batch(&x, 30).iter().all(|p| *p == 1));
    }

    #[test]
    fn clusters_and_monotone_loss() {
        let (x, y) = clusters(600, 4, 0.6, 2);
        let (xt, yt) = clusters(300, 4, 0.6, 3);
        let cfg = GbdtConfig { n_rounds: 40, ..GbdtConfig::default() };
        let m = Gbdt::fit(&TrainingSet::new(&x, 4, &y).unwrap(), &cfg).unwrap();
        assert!(accuracy_pct(&m.predict_batch(&xt, 300), &yt) >= 90.0);
        for w in m.train_loss.windows(2) {
            assert!(w[1] <= w[0] + 1e-12, "{w:?}");
        }
    }

    #[test]
    fn rejects_bad_rate() {
        let cfg = GbdtConfig { learning_rate: 1.5, ..GbdtConfig::default() };
        assert!(cfg.validate().is_err());
    }
}
