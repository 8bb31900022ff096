use serde::{Deserialize, Serialize};

use super::FeatureError;
use crate::dataset::FeatureMatrix;

/// Per-column min-max scaling to `[0, 1]`. Constant columns map to 0 and
/// values outside the fitted range are clamped.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct MinMaxScaler {
    mins: Vec<f64>,
    maxs: Vec<f64>,
}

impl MinMaxScaler {
    pub fn fit<'a>(rows: impl IntoIterator<Item = &'a [f64]>) -> Result<Self, FeatureError> {
        let mut it = rows.into_iter();
        let first = it.next().ok_or(FeatureError::EmptyMatrix)?;
        let (mut mins, mut maxs) = (first.to_vec(), first.to_vec());
        for r in it {
            if r.len() != mins.len() {
                return Err(FeatureError::Shape(format!("row of {} values, expected {}", r.len(), mins.len())));
            }
            for (j, &v) in r.iter().enumerate() {
                mins[j] = mins[j].min(v);
                maxs[j] = maxs[j].max(v);
            }
        }
        Ok(Self { mins, maxs })
    }

    /// Fits on the train-flagged rows only.
    pub fn fit_train(m: &FeatureMatrix) -> Result<Self, FeatureError> {
        if m.split().is_none() {
            return Err(FeatureError::NoSplit);
        }
        Self::fit(m.train_rows().into_iter().map(|i| m.row(i)))
    }

    pub fn dims(&self) -> usize {
        self.mins.len()
    }

    pub fn mins(&self) -> &[f64] {
        &self.mins
    }

    pub fn maxs(&self) -> &[f64] {
        &self.maxs
    }

    pub fn apply_in_place(&self, row: &mut [f64]) -> Result<(), FeatureError> {
        if self.mins.is_empty() {
            return Err(FeatureError::NotFitted);
        }
        if row.len() != self.mins.len() {
            return Err(FeatureError::Shape(format!("row of {} values, expected {}", row.len(), self.mins.len())));
        }
        for (j, v) in row.iter_mut().enumerate() {
            let span = self.maxs[j] - self.mins[j];
            *v = if span > 0.0 { ((*v - self.mins[j]) / span).clamp(0.0, 1.0) } else { 0.0 };
        }
        Ok(())
    }

    pub fn apply(&self, row: &[f64]) -> Result<Vec<f64>, FeatureError> {
        let mut out = row.to_vec();
        self.apply_in_place(&mut out)?;
        Ok(out)
    }

    /// Scales every row of `m`, returning row-major data.
    pub fn transform(&self, m: &FeatureMatrix) -> Result<Vec<f64>, FeatureError> {
        let mut data = m.data().to_vec();
        if m.n_cols() > 0 {
            for row in data.chunks_mut(m.n_cols()) {
                self.apply_in_place(row)?;
            }
        }
        Ok(data)
    }
}
