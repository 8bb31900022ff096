use std::io::Write;

use serde::{Deserialize, Serialize};

use super::{accuracy_pct, gather_rows, Classifier, ModelError};
use crate::dataset::FeatureMatrix;
use crate::numfmt::sig9;
use crate::rng::SplitMix64;

pub const DEFAULT_REPEATS: usize = 5;
pub const MIN_PERMUTATION_ROWS: usize = 30;
pub const MAX_SHAPLEY_FEATURES: usize = 12;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AttributionMethod {
    Permutation,
    ShapleyExact,
}

impl AttributionMethod {
    pub fn as_str(self) -> &'static str {
        match self {
            AttributionMethod::Permutation => "permutation",
            AttributionMethod::ShapleyExact => "shapley_exact",
        }
    }
}

/// Per-feature scores in schema order. `baseline` is the unpermuted test
/// accuracy (permutation) or the mean background output (Shapley).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Attribution {
    pub method: AttributionMethod,
    pub features: Vec<String>,
    pub scores: Vec<f64>,
    pub baseline: f64,
    /// Class whose score was attributed, for Shapley values.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub class: Option<usize>,
}

impl Attribution {
    /// CSV `feature,method,score,rank`, rows in rank order.
    pub fn write_csv<W: Write>(&self, w: W) -> Result<(), csv::Error> {
        let mut out = csv::Writer::from_writer(w);
        out.write_record(["feature", "method", "score", "rank"])?;
        for (rank, (name, score)) in top_k_features(self, self.features.len()).into_iter().enumerate() {
            out.write_record([name, self.method.as_str().to_string(), sig9(score), (rank + 1).to_string()])?;
        }
        out.flush()?;
        Ok(())
    }
}

/// Test-accuracy drop when each column is shuffled among the test rows,
/// averaged over `repeats`. Column `j` draws its permutations from stream
/// `j` of `seed`.
pub fn permutation_importance(
    model: &dyn Classifier,
    m: &FeatureMatrix,
    seed: u64,
    repeats: usize,
) -> Result<Attribution, ModelError> {
    let rows = m.test_rows();
    if rows.len() < MIN_PERMUTATION_ROWS {
        return Err(ModelError::TooFewRows { n: rows.len(), min: MIN_PERMUTATION_ROWS });
    }
    if repeats == 0 {
        return Err(ModelError::InvalidConfig("repeats must be at least 1".into()));
    }
    let (mut x, y) = gather_rows(m, &rows);
    let (n, d) = (rows.len(), m.n_cols());
    let baseline = accuracy_pct(&model.predict_batch(&x, n), &y);
    let mut scores = Vec::with_capacity(d);
    let mut order: Vec<usize> = (0..n).collect();
    for j in 0..d {
        let original: Vec<f64> = (0..n).map(|i| x[i * d + j]).collect();
        let mut rng = SplitMix64::derive(seed, j as u64);
        let mut total = 0.0;
        for _ in 0..repeats {
            order.iter_mut().enumerate().for_each(|(i, o)| *o = i);
            rng.shuffle(&mut order);
            for (i, &src) in order.iter().enumerate() {
                x[i * d + j] = original[src];
            }
            total += accuracy_pct(&model.predict_batch(&x, n), &y);
        }
        for (i, v) in original.iter().enumerate() {
            x[i * d + j] = *v;
        }
        scores.push(baseline - total / repeats as f64);
    }
    Ok(Attribution {
        method: AttributionMethod::Permutation,
        features: m.schema().names().map(str::to_string).collect(),
        scores,
        baseline,
        class: None,
    })
}

/// Exact Shapley values of `f` at `instance` for the features in `subset`.
/// A coalition's value averages `f` over the background rows, with coalition
/// features and every feature outside `subset` taken from the instance and
/// the remaining subset features from the background row. Returns one value
/// per entry of `subset` and the empty-coalition value.
pub fn shapley_exact(
    f: &dyn Fn(&[f64]) -> f64,
    instance: &[f64],
    background: &[Vec<f64>],
    subset: &[usize],
) -> Result<(Vec<f64>, f64), ModelError> {
    let s = subset.len();
    if s > MAX_SHAPLEY_FEATURES {
        return Err(ModelError::SubsetTooLarge(s));
    }
    if background.is_empty() {
        return Err(ModelError::TooFewRows { n: 0, min: 1 });
    }
    if let Some(j) = subset.iter().find(|j| **j >= instance.len()) {
        return Err(ModelError::Shape(format!("feature {j} outside a row of width {}", instance.len())));
    }
    if background.iter().any(|b| b.len() != instance.len()) {
        return Err(ModelError::Shape("background row width differs from the instance".into()));
    }
    let mut value = vec![0.0; 1 << s];
    let mut z = instance.to_vec();
    for (mask, v) in value.iter_mut().enumerate() {
        let mut total = 0.0;
        for b in background {
            for (bit, &j) in subset.iter().enumerate() {
                z[j] = if mask >> bit & 1 == 1 { instance[j] } else { b[j] };
            }
            total += f(&z);
        }
        *v = total / background.len() as f64;
    }
    // weight[c] = c!(s-c-1)!/s!
    let fact: Vec<f64> = (0..=s)
        .scan(1.0, |acc, i| {
            if i > 0 {
                *acc *= i as f64;
            }
            Some(*acc)
        })
        .collect();
    let weight: Vec<f64> = (0..s).map(|c| fact[c] * fact[s - c - 1] / fact[s]).collect();
    let phi = (0..s)
        .map(|i| {
            let bit = 1usize << i;
            (0..value.len())
                .filter(|mask| mask & bit == 0)
                .map(|mask| weight[mask.count_ones() as usize] * (value[mask | bit] - value[mask]))
                .sum()
        })
        .collect();
    Ok((phi, value[0]))
}

/// Shapley values of the model's score for `class`. Features outside
/// `subset` score 0.
pub fn shapley_for_class(
    model: &dyn Classifier,
    class: usize,
    names: &[String],
    instance: &[f64],
    background: &[Vec<f64>],
    subset: &[usize],
) -> Result<Attribution, ModelError> {
    let f = |x: &[f64]| model.class_scores(x)[class];
    let (phi, base) = shapley_exact(&f, instance, background, subset)?;
    let mut scores = vec![0.0; names.len()];
    for (&j, p) in subset.iter().zip(phi) {
        scores[j] = p;
    }
    Ok(Attribution {
        method: AttributionMethod::ShapleyExact,
        features: names.to_vec(),
        scores,
        baseline: base,
        class: Some(class),
    })
}

/// The `k` features with the largest `|score|`; equal magnitudes keep
/// schema order.
pub fn top_k_features(attr: &Attribution, k: usize) -> Vec<(String, f64)> {
    let mut idx: Vec<usize> = (0..attr.scores.len()).collect();
    idx.sort_by(|a, b| attr.scores[*b].abs().total_cmp(&attr.scores[*a].abs()));
    idx.into_iter().take(k).map(|i| (attr.features[i].clone(), attr.scores[i])).collect()
}
