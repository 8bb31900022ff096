use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::ingest::{SemanticStats, COUNTED_OBJECTS};

/// Segmentation classes whose pixel share is a candidate feature.
pub const SEGMENTATION_CLASSES: [&str; 20] = [
    "road",
    "sidewalk",
    "building",
    "wall",
    "fence",
    "pole",
    "traffic_light",
    "traffic_sign",
    "vegetation",
    "terrain",
    "sky",
    "person",
    "rider",
    "car",
    "truck",
    "bus",
    "train",
    "motorcycle",
    "bicycle",
    "unlabeled",
];

const LEAD_PREFIX: &str = "lead_car_";
const COUNT_SUFFIX: &str = "_count";

/// The 17 semantic features retained after variability filtering: 10 full
/// frame, 7 lead-car region.
pub const STANDARD_NAMES: [&str; 17] = [
    "car_count",
    "road",
    "vegetation",
    "sky",
    "terrain",
    "car",
    "sidewalk",
    "building",
    "traffic_light",
    "person",
    "lead_car_traffic_sign",
    "lead_car_road",
    "lead_car_vegetation",
    "lead_car_sky",
    "lead_car_car",
    "lead_car_fence",
    "lead_car_car_count",
];

/// All 50 candidates: per region, 20 class shares then 5 object counts.
pub static CANDIDATE_NAMES: std::sync::LazyLock<Vec<String>> = std::sync::LazyLock::new(|| {
    let mut out = Vec::with_capacity(50);
    for prefix in ["", LEAD_PREFIX] {
        out.extend(SEGMENTATION_CLASSES.iter().map(|c| format!("{prefix}{c}")));
        out.extend(COUNTED_OBJECTS.iter().map(|o| format!("{prefix}{o}{COUNT_SUFFIX}")));
    }
    out
});

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SemanticMode {
    /// The fixed 17 names.
    #[default]
    Standard17,
    /// All 50 candidates, unfiltered.
    All50,
    /// All 50 candidates, then the low-variability filter.
    Auto,
}

/// Candidate names for a mode, before any filtering.
pub fn semantic_names(mode: SemanticMode) -> Vec<String> {
    match mode {
        SemanticMode::Standard17 => STANDARD_NAMES.iter().map(|s| s.to_string()).collect(),
        SemanticMode::All50 | SemanticMode::Auto => CANDIDATE_NAMES.clone(),
    }
}

fn share(pixels: &BTreeMap<String, u64>, class: &str, total: u64) -> f64 {
    match (pixels.get(class), total) {
        (Some(&p), t) if t > 0 => p as f64 / t as f64,
        _ => 0.0,
    }
}

/// Value of one named semantic feature. Names are `<class>` or
/// `<object>_count`, optionally prefixed with `lead_car_` for the lead-car
/// region. Absent classes are 0.
pub fn semantic_value(stats: &SemanticStats, name: &str) -> f64 {
    let (rest, pixels, counts, total) = match name.strip_prefix(LEAD_PREFIX) {
        Some(rest) => (rest, &stats.lead_car, &stats.counts_lead, stats.lead_pixels),
        None => (name, &stats.full, &stats.counts_full, stats.total_pixels),
    };
    if let Some(obj) = rest.strip_suffix(COUNT_SUFFIX) {
        if COUNTED_OBJECTS.contains(&obj) {
            return counts.get(obj).copied().unwrap_or(0) as f64;
        }
    }
    share(pixels, rest, total)
}

pub fn semantic_features(stats: &SemanticStats, names: &[String]) -> Vec<f64> {
    names.iter().map(|n| semantic_value(stats, n)).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn stats() -> SemanticStats {
        let mut s = SemanticStats::new(100, 20);
        s.full.insert("road".into(), 50);
        s.full.insert("sky".into(), 30);
        s.lead_car.insert("road".into(), 5);
        s.counts_full.insert("car".into(), 3);
        s.counts_lead.insert("car".into(), 1);
        s
    }

    #[test]
    fn shares_and_counts() {
        let s = stats();
        assert_eq!(semantic_value(&s, "road"), 0.5);
        assert_eq!(semantic_value(&s, "vegetation"), 0.0);
        assert_eq!(semantic_value(&s, "car_count"), 3.0);
        assert_eq!(semantic_value(&s, "lead_car_car_count"), 1.0);
        assert_eq!(semantic_value(&s, "lead_car_road"), 0.25);
    }

    #[test]
    fn standard_names_split_ten_and_seven() {
        let lead = STANDARD_NAMES.iter().filter(|n| n.starts_with(LEAD_PREFIX)).count();
        assert_eq!((STANDARD_NAMES.len() - lead, lead), (10, 7));
        assert!(STANDARD_NAMES.iter().all(|n| CANDIDATE_NAMES.contains(&n.to_string())));
    }

    #[test]
    fn fifty_unique_candidates() {
        let mut v = CANDIDATE_NAMES.clone();
        v.sort();
        v.dedup();
        assert_eq!(v.len(), 50);
    }

    #[test]
    fn shares_are_fractions() {
        let s = stats();
        let full: f64 = SEGMENTATION_CLASSES.iter().map(|c| semantic_value(&s, c)).sum();
        assert!(full <= 1.0);
        assert_eq!(semantic_value(&SemanticStats::new(0, 0), "road"), 0.0);
    }
}
