//! Parsers for every external input: trip logs, semantic summaries,
//! contextual annotation runs, complexity scores, crash records and speed
//! limit polylines.
//!
//! Each parser has a `read_*` form over any reader and a path form; each
//! format also has a writer so files round-trip.

mod complexity;
mod contextual;
mod crash;
mod semantic;
mod speed_limit;
mod trip;

use std::fs::File;
use std::io::BufReader;
use std::path::{Path, PathBuf};

use thiserror::Error;

pub use complexity::{
    parse_complexity, read_complexity, write_complexity, ComplexityFile, ComplexityScore, ComplexitySource,
    CROWD_STD_WARNING,
};
pub use contextual::{
    majority_vote, parse_contextual_runs, read_contextual_runs, write_contextual_runs, ContextualAnswer,
    ContextualRecord, FrameRuns, Question, RunAnswers,
};
pub use crash::{parse_crashes, read_crashes, write_crashes, CrashFile, CrashRecord, YearWindow};
pub use semantic::{
    parse_semantic_summary, read_semantic_summary, write_semantic_summary, SemanticStats, COUNTED_OBJECTS,
};
pub use speed_limit::{
    lookup_speed_limit, parse_speed_limits, read_speed_limits, write_speed_limits, Road, SpeedLimitMap,
    ROAD_SEARCH_RADIUS_M,
};
pub use trip::{parse_trip_index, parse_trip_log, read_trip_index, read_trip_log, write_trip_index, write_trip_log};

#[derive(Debug, Error)]
pub enum IngestError {
    #[error("{path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error("line {line}: malformed row: {reason}")]
    MalformedRow { line: u64, reason: String },
    #[error("line {line}: timestamp does not increase")]
    NonMonotonicTime { line: u64 },
    #[error("frame {frame}: {region} class pixels exceed the region's pixel count")]
    PixelOverflow { frame: usize, region: &'static str },
    #[error("frame {0} appears more than once")]
    DuplicateFrame(usize),
    #[error("frame {frame}: expected 3 annotation runs, got {count}")]
    WrongRunCount { frame: usize, count: usize },
    #[error("run {run} has no answer for `{question}`")]
    MissingAnswer { question: Question, run: usize },
    #[error("frame {frame}: complexity score out of range")]
    OutOfRange { frame: usize },
    #[error("frame {frame}: expected 3 crowd votes")]
    WrongVoteCount { frame: usize },
    #[error("speed limit map is empty")]
    EmptyMap,
    #[error("invalid road: {0}")]
    InvalidRoad(String),
    #[error("no road within {radius_m} m (nearest is {nearest_m:.1} m away)")]
    NoRoadWithin { radius_m: f64, nearest_m: f64 },
    #[error("json: {0}")]
    Json(#[from] serde_json::Error),
    #[error("csv: {0}")]
    Csv(#[from] csv::Error),
    #[error("{0}")]
    Invalid(String),
}

impl IngestError {
    /// Attaches a file path to I/O failures.
    pub(crate) fn io(path: &Path, source: std::io::Error) -> Self {
        IngestError::Io { path: path.to_path_buf(), source }
    }
}

pub(crate) fn open(path: &Path) -> Result<BufReader<File>, IngestError> {
    File::open(path).map(BufReader::new).map_err(|e| IngestError::io(path, e))
}

/// 1-based line number of a CSV record, falling back to the record index.
pub(crate) fn record_line(rec: &csv::StringRecord, fallback: usize) -> u64 {
    rec.position().map(|p| p.line()).unwrap_or(fallback as u64 + 2)
}
