//! Metrics, paired comparison, and the experiment grid.

pub mod grid;
pub mod metrics;
pub mod report;

use thiserror::Error;

use crate::dataset::DatasetError;
use crate::encoder::EncoderError;
use crate::models::ModelError;

pub use grid::{
    run_experiment_grid, variant_matrix, EncoderVariant, ExperimentSpec, GridConfig, GridData, TrainedEncoders, Variant,
};
pub use metrics::{
    accuracy, binomial_two_sided, chi2_1_survival, confusion_matrix, mcnemar, mcnemar_counts, ComparisonResult,
};
pub use report::{config_hash, AblationRow, EncoderRow, GridReport, Hypothesis, MainRow, SourceRow};

#[derive(Debug, Error)]
pub enum EvalError {
    #[error("{preds} predictions for {labels} labels")]
    LengthMismatch { preds: usize, labels: usize },
    #[error("class index {0} out of range")]
    BadClass(usize),
    #[error("no discordant pairs: both classifiers agree on every row")]
    NoDiscordantPairs,
    #[error("invalid experiment: {0}")]
    InvalidSpec(String),
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Encoder(#[from] EncoderError),
    #[error(transparent)]
    Dataset(#[from] DatasetError),
}
