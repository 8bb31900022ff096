//! Fixed-distance frame sampling and the three feature families.

pub mod contextual;
pub mod filter;
pub mod kinematics;
pub mod sampling;
pub mod scale;
pub mod semantic;

use thiserror::Error;

use crate::ingest::Question;

pub use contextual::{default_record, ContextualEncoding, QuestionLevels};
pub use filter::{filter_low_variability, ZERO_FRACTION_THRESHOLD};
pub use kinematics::{kinematics, KinematicFeatures, KINEMATIC_NAMES};
pub use sampling::{sample_frames, sample_samples, Anchor, SamplingPlan, DEFAULT_INTERVAL_M};
pub use scale::MinMaxScaler;
pub use semantic::{
    semantic_features, semantic_names, semantic_value, SemanticMode, CANDIDATE_NAMES, SEGMENTATION_CLASSES,
    STANDARD_NAMES,
};

#[derive(Debug, Error)]
pub enum FeatureError {
    #[error("trip has no samples")]
    DegenerateTrip,
    #[error("sampling interval must be positive, got {0}")]
    BadInterval(f64),
    #[error("kinematic segment is empty")]
    EmptySegment,
    #[error("speed limit must be positive, got {0}")]
    NonPositiveLimit(f64),
    #[error("`{answer}` is not a declared level of `{question}`")]
    UnknownLevel { question: Question, answer: String },
    #[error("no answer for `{0}`")]
    MissingAnswer(Question),
    #[error("invalid contextual encoding: {0}")]
    InvalidEncoding(String),
    #[error("feature matrix has no rows")]
    EmptyMatrix,
    #[error("scaler has not been fitted")]
    NotFitted,
    #[error("matrix has no train/test split")]
    NoSplit,
    #[error("shape mismatch: {0}")]
    Shape(String),
}
