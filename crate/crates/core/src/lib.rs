//! Crash-density prediction from driving data with a learned roadway
//! complexity representation.
//!
//! Trips are sampled every 20 m into frames carrying semantic, kinematic and
//! contextual features. Historical crashes give each frame a Low / Medium /
//! High density label through a kernel density estimate. A small encoder is
//! trained to predict a scalar complexity index from the features, and its
//! hidden activations are appended as extra inputs to the crash-density
//! classifiers. [`pipeline`] runs the whole chain; [`synth`] builds worlds
//! with known ground truth to test it on.

pub mod dataset;
pub mod encoder;
pub mod eval;
pub mod features;
pub mod geo;
pub mod ingest;
pub mod kde;
pub mod models;
pub mod neural;
pub mod numfmt;
pub mod pipeline;
pub mod rng;
pub mod synth;

pub use dataset::{FeatureGroup, FeatureMatrix, FeatureSchema, FrameRecord, Scenario, TripSeries};
pub use encoder::{EncoderConfig, Head, InputSet, TrainedEncoder};
pub use eval::{mcnemar, run_experiment_grid, GridConfig, GridData, GridReport};
pub use geo::{haversine_m, GeoPoint};
pub use kde::{BinThresholds, DensityField, DensityLabel};
pub use models::{ModelKind, TrainedModel};
pub use pipeline::{PipelineConfig, PipelineError};
pub use rng::SplitMix64;
pub use synth::{generate_world, WorldConfig};
