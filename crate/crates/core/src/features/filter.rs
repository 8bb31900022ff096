use super::FeatureError;

/// Columns with more than this fraction of exact zeros are dropped.
pub const ZERO_FRACTION_THRESHOLD: f64 = 0.90;

/// Names of the columns to keep, in their original order. A column is dropped
/// iff its fraction of exact zeros is strictly greater than `threshold`.
pub fn filter_low_variability(
    names: &[String],
    rows: &[Vec<f64>],
    threshold: f64,
) -> Result<Vec<String>, FeatureError> {
    if rows.is_empty() {
        return Err(FeatureError::EmptyMatrix);
    }
    if let Some(r) = rows.iter().find(|r| r.len() != names.len()) {
        return Err(FeatureError::Shape(format!("row of {} values for {} names", r.len(), names.len())));
    }
    let n = rows.len() as f64;
    Ok(names
        .iter()
        .enumerate()
        .filter(|(j, _)| {
            let zeros = rows.iter().filter(|r| r[*j] == 0.0).count() as f64;
            zeros / n <= threshold
        })
        .map(|(_, name)| name.clone())
        .collect())
}
