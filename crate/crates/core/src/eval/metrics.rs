use serde::{Deserialize, Serialize};
use statrs::function::erf::erfc;

use super::EvalError;
use crate::models::N_CLASSES;

/// Below this many discordant pairs the p-value comes from the exact
/// two-sided binomial test.
pub const EXACT_BELOW: usize = 25;

fn check_lengths(a: usize, b: usize) -> Result<(), EvalError> {
    if a != b || a == 0 {
        return Err(EvalError::LengthMismatch { preds: a, labels: b });
    }
    Ok(())
}

/// `100 · correct / total`.
pub fn accuracy(preds: &[usize], labels: &[usize]) -> Result<f64, EvalError> {
    check_lengths(preds.len(), labels.len())?;
    let hits = preds.iter().zip(labels).filter(|(p, l)| p == l).count();
    Ok(100.0 * hits as f64 / labels.len() as f64)
}

/// Counts with true class as row and predicted class as column.
pub fn confusion_matrix(preds: &[usize], labels: &[usize]) -> Result<[[usize; N_CLASSES]; N_CLASSES], EvalError> {
    check_lengths(preds.len(), labels.len())?;
    let mut m = [[0; N_CLASSES]; N_CLASSES];
    for (&p, &l) in preds.iter().zip(labels) {
        if p >= N_CLASSES || l >= N_CLASSES {
            return Err(EvalError::BadClass(p.max(l)));
        }
        m[l][p] += 1;
    }
    Ok(m)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ComparisonResult {
    pub accuracy_a: f64,
    pub accuracy_b: f64,
    /// Rows where `a` is right and `b` wrong.
    pub b: usize,
    /// Rows where `a` is wrong and `b` right.
    pub c: usize,
    /// Continuity-corrected statistic `(|b − c| − 1)² / (b + c)`.
    pub chi2: f64,
    pub p_value: f64,
    /// Whether `p_value` came from the exact binomial test.
    pub exact: bool,
}

/// Two-sided upper tail of the chi-square distribution with one degree of
/// freedom.
pub fn chi2_1_survival(x: f64) -> f64 {
    erfc((x / 2.0).sqrt())
}

/// Two-sided exact binomial p-value for `min(b, c)` successes out of
/// `b + c` trials at one half.
pub fn binomial_two_sided(b: usize, c: usize) -> f64 {
    let n = b + c;
    let k = b.min(c);
    let mut term = 0.5f64.powi(n as i32);
    let mut tail = 0.0;
    for i in 0..=k {
        tail += term;
        term *= (n - i) as f64 / (i + 1) as f64;
    }
    (2.0 * tail).min(1.0)
}

/// McNemar's test of paired predictions `a` and `b` against `labels`.
pub fn mcnemar(preds_a: &[usize], preds_b: &[usize], labels: &[usize]) -> Result<ComparisonResult, EvalError> {
    check_lengths(preds_a.len(), labels.len())?;
    check_lengths(preds_b.len(), labels.len())?;
    let (mut b, mut c) = (0, 0);
    for ((pa, pb), l) in preds_a.iter().zip(preds_b).zip(labels) {
        match (pa == l, pb == l) {
            (true, false) => b += 1,
            (false, true) => c += 1,
            _ => {}
        }
    }
    let mut r = mcnemar_counts(b, c)?;
    r.accuracy_a = accuracy(preds_a, labels)?;
    r.accuracy_b = accuracy(preds_b, labels)?;
    Ok(r)
}

/// The test from discordant counts alone; accuracies are left at zero.
pub fn mcnemar_counts(b: usize, c: usize) -> Result<ComparisonResult, EvalError> {
    if b + c == 0 {
        return Err(EvalError::NoDiscordantPairs);
    }
    let diff = (b as f64 - c as f64).abs() - 1.0;
    let chi2 = diff * diff / (b + c) as f64;
    let exact = b + c < EXACT_BELOW;
    let p_value = if exact { binomial_two_sided(b, c) } else { chi2_1_survival(chi2) };
    Ok(ComparisonResult { accuracy_a: 0.0, accuracy_b: 0.0, b, c, chi2, p_value, exact })
}
