use serde::{Deserialize, Serialize};

use super::tree::{grow, BinnedMatrix, GrowParams, Tree};
use super::{argmax, train_part, Classifier, ModelError, TrainingSet, N_CLASSES};
use crate::dataset::FeatureMatrix;
use crate::rng::SplitMix64;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ForestConfig {
    pub n_trees: usize,
    pub max_depth: usize,
    pub min_leaf: usize,
    /// Features drawn per split; `None` means `round(sqrt(d))`.
    pub max_features: Option<usize>,
    pub bootstrap: bool,
    pub seed: u64,
}

impl Default for ForestConfig {
    fn default() -> Self {
        Self { n_trees: 200, max_depth: 12, min_leaf: 2, max_features: None, bootstrap: true, seed: 0 }
    }
}

impl ForestConfig {
    pub fn validate(&self) -> Result<(), ModelError> {
        if self.n_trees == 0 || self.max_depth == 0 || self.min_leaf == 0 {
            return Err(ModelError::InvalidConfig("n_trees, max_depth and min_leaf must be at least 1".into()));
        }
        if self.max_features == Some(0) {
            return Err(ModelError::InvalidConfig("max_features must be at least 1".into()));
        }
        Ok(())
    }

    pub fn features_per_split(&self, d: usize) -> usize {
        self.max_features.unwrap_or_else(|| (d as f64).sqrt().round() as usize).clamp(1, d.max(1))
    }
}

/// Random forest of Gini trees. Leaves hold class counts; each tree votes
/// for its leaf's majority class.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Forest {
    pub config: ForestConfig,
    pub n_features: usize,
    pub trees: Vec<Tree>,
    /// Out-of-bag accuracy in percent, when bootstrapping left any row out.
    pub oob_accuracy: Option<f64>,
}

impl Forest {
    pub fn fit(data: &TrainingSet<'_>, cfg: &ForestConfig) -> Result<Self, ModelError> {
        cfg.validate()?;
        let binned = BinnedMatrix::new(data.x, data.n, data.d);
        let mut channels = vec![0.0; data.n * N_CLASSES];
        for (i, &l) in data.labels.iter().enumerate() {
            channels[i * N_CLASSES + l] = 1.0;
        }
        let leaf = |rows: &[u32]| {
            let mut c = vec![0.0; N_CLASSES];
            for &r in rows {
                c[data.labels[r as usize]] += 1.0;
            }
            c
        };
        let mtry = cfg.features_per_split(data.d);
        let mut trees = Vec::with_capacity(cfg.n_trees);
        let mut oob_votes = vec![[0u32; N_CLASSES]; data.n];
        for t in 0..cfg.n_trees {
            let mut rng = SplitMix64::new(cfg.seed.wrapping_add(t as u64));
            let mut in_bag = vec![false; data.n];
            let rows: Vec<u32> = if cfg.bootstrap {
                (0..data.n)
                    .map(|_| {
                        let i = rng.below(data.n);
                        in_bag[i] = true;
                        i as u32
                    })
                    .collect()
            } else {
                in_bag.fill(true);
                (0..data.n as u32).collect()
            };
            let tree = grow(
                &binned,
                rows,
                &channels,
                N_CLASSES,
                GrowParams {
                    max_depth: cfg.max_depth,
                    min_leaf: cfg.min_leaf,
                    max_features: Some(mtry),
                    rng: Some(&mut rng),
                },
                &leaf,
            );
            for i in (0..data.n).filter(|i| !in_bag[*i]) {
                oob_votes[i][argmax(tree.leaf_value(data.row(i)))] += 1;
            }
            trees.push(tree);
        }
        let (mut hits, mut seen) = (0usize, 0usize);
        for (votes, &l) in oob_votes.iter().zip(data.labels) {
            if votes.iter().any(|v| *v > 0) {
                seen += 1;
                let v: Vec<f64> = votes.iter().map(|v| *v as f64).collect();
                hits += usize::from(argmax(&v) == l);
            }
        }
        let oob_accuracy = (seen > 0).then(|| 100.0 * hits as f64 / seen as f64);
        Ok(Self { config: cfg.clone(), n_features: data.d, trees, oob_accuracy })
    }

    /// Vote counts per class.
    pub fn votes(&self, x: &[f64]) -> [usize; N_CLASSES] {
        let mut v = [0; N_CLASSES];
        for t in &self.trees {
            v[argmax(t.leaf_value(x))] += 1;
        }
        v
    }
}

impl Classifier for Forest {
    fn n_features(&self) -> usize {
        self.n_features
    }

    fn class_scores(&self, x: &[f64]) -> [f64; N_CLASSES] {
        let v = self.votes(x);
        let n = self.trees.len() as f64;
        [v[0] as f64 / n, v[1] as f64 / n, v[2] as f64 / n]
    }
}

/// Fits a forest on the train rows of `m`.
pub fn train_rf(m: &FeatureMatrix, cfg: &ForestConfig) -> Result<Forest, ModelError> {
    let (x, y) = train_part(m)?;
    Forest::fit(&TrainingSet::new(&x, m.n_cols(), &y)?, cfg)
}

pub fn predict_rf(forest: &Forest, row: &[f64]) -> usize {
    forest.predict(row)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::models::accuracy_pct;
    use crate::models::testdata::clusters;

    fn small(seed: u64) -> ForestConfig {
        ForestConfig { n_trees: 30, seed, ..ForestConfig::default() }
    }

    #[test]
    fn separable_single_feature() {
        let x: Vec<f64> = (0..60).map(|i| i as f64).collect();
        let y: Vec<usize> = (0..60).map(|i| i / 20).collect();
        let f = Forest::fit(&TrainingSet::new(&x, 1, &y).unwrap(), &small(1)).unwrap();
        let pred = f.predict_batch(&x, 60);
        assert_eq!(accuracy_pct(&pred, &y), 100.0);
    }

    #[test]
    fn pure_labels_predict_that_label() {
        let x: Vec<f64> = (0..20).map(|i| (i * 7 % 13) as f64).collect();
        let y = vec![2; 20];
        let f = Forest::fit(&TrainingSet::new(&x, 1, &y).unwrap(), &small(2)).unwrap();
        assert!((0..30).all(|q| f.predict(&[q as f64 - 5.0]) == 2));
    }

    #[test]
    fn clusters_are_learned() {
        let (x, y) = clusters(600, 5, 0.5, 3);
        let (xt, yt) = clusters(300, 5, 0.5, 4);
        let f = Forest::fit(&TrainingSet::new(&x, 5, &y).unwrap(), &small(5)).unwrap();
        assert!(accuracy_pct(&f.predict_batch(&xt, 300), &yt) >= 95.0);
        let oob = f.oob_accuracy.unwrap();
        assert!(oob >= 90.0, "{oob}");
    }

    #[test]
    fn deterministic_and_round_trips() {
        let (x, y) = clusters(150, 4, 1.0, 6);
        let t = TrainingSet::new(&x, 4, &y).unwrap();
        let a = Forest::fit(&t, &small(7)).unwrap();
        let b = Forest::fit(&t, &small(7)).unwrap();
        assert_eq!(a, b);
        let json = serde_json::to_string(&a).unwrap();
        let back: Forest = serde_json::from_str(&json).unwrap();
        assert_eq!(back.predict_batch(&x, 150), a.predict_batch(&x, 150));
    }

    #[test]
    fn default_features_per_split() {
        let c = ForestConfig::default();
        assert_eq!(c.features_per_split(45), 7);
        assert_eq!(c.features_per_split(77), 9);
        assert_eq!(c.features_per_split(1), 1);
    }
}
