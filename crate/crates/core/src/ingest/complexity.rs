use std::collections::BTreeMap;
use std::io::{Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{open, record_line, IngestError};

/// Per-frame crowd score spread above which a warning is raised. Pilot
/// annotations never exceeded it.
pub const CROWD_STD_WARNING: f64 = 3.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ComplexitySource {
    /// Language-model rating, 0–10.
    Machine,
    /// Mean of three crowd-worker ratings, 1–10.
    Crowd,
}

impl ComplexitySource {
    pub fn range(&self) -> (f64, f64) {
        match self {
            ComplexitySource::Machine => (0.0, 10.0),
            ComplexitySource::Crowd => (1.0, 10.0),
        }
    }

    pub fn as_str(&self) -> &'static str {
        match self {
            ComplexitySource::Machine => "machine",
            ComplexitySource::Crowd => "crowd",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComplexityScore {
    pub source: ComplexitySource,
    pub value: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub raw_votes: Option<Vec<f64>>,
}

impl ComplexityScore {
    pub fn new(source: ComplexitySource, value: f64, raw_votes: Option<Vec<f64>>) -> Self {
        Self { source, value, raw_votes }
    }

    /// Crowd score from three votes; the value is their arithmetic mean.
    pub fn from_votes(votes: [f64; 3]) -> Self {
        let mean = votes.iter().sum::<f64>() / 3.0;
        Self::new(ComplexitySource::Crowd, mean, Some(votes.to_vec()))
    }

    /// Sample standard deviation of the crowd votes.
    pub fn vote_std(&self) -> Option<f64> {
        let v = self.raw_votes.as_ref()?;
        if v.len() < 2 {
            return None;
        }
        let mean = v.iter().sum::<f64>() / v.len() as f64;
        let ss: f64 = v.iter().map(|x| (x - mean).powi(2)).sum();
        Some((ss / (v.len() - 1) as f64).sqrt())
    }
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct ComplexityFile {
    pub scores: BTreeMap<usize, ComplexityScore>,
    /// Frames whose crowd votes disagree by more than [`CROWD_STD_WARNING`].
    pub warnings: Vec<String>,
}

fn number(raw: &str, frame: usize) -> Result<f64, IngestError> {
    let v: f64 = raw.trim().parse().map_err(|_| IngestError::OutOfRange { frame })?;
    if !v.is_finite() {
        return Err(IngestError::OutOfRange { frame });
    }
    Ok(v)
}

/// Machine files are `frame,score` with a score in `[0, 10]`; crowd files are
/// `frame,v1,v2,v3` with votes in `[1, 10]`.
pub fn read_complexity<R: Read>(r: R, source: ComplexitySource) -> Result<ComplexityFile, IngestError> {
    let mut rdr = csv::ReaderBuilder::new().flexible(true).from_reader(r);
    let (lo, hi) = source.range();
    let mut out = ComplexityFile::default();
    for (i, rec) in rdr.records().enumerate() {
        let rec = rec?;
        let line = record_line(&rec, i);
        let frame: usize = rec
            .get(0)
            .and_then(|f| f.trim().parse().ok())
            .ok_or_else(|| IngestError::MalformedRow { line, reason: "bad frame index".into() })?;
        let score = match source {
            ComplexitySource::Machine => {
                if rec.len() != 2 {
                    return Err(IngestError::MalformedRow { line, reason: "expected frame,score".into() });
                }
                let v = number(&rec[1], frame)?;
                if !(lo..=hi).contains(&v) {
                    return Err(IngestError::OutOfRange { frame });
                }
                ComplexityScore::new(source, v, None)
            }
            ComplexitySource::Crowd => {
                if rec.len() != 4 {
                    return Err(IngestError::WrongVoteCount { frame });
                }
                let mut votes = [0.0; 3];
                for (k, v) in votes.iter_mut().enumerate() {
                    *v = number(&rec[k + 1], frame)?;
                    if !(lo..=hi).contains(v) {
                        return Err(IngestError::OutOfRange { frame });
                    }
                }
                let s = ComplexityScore::from_votes(votes);
                if let Some(sd) = s.vote_std().filter(|sd| *sd > CROWD_STD_WARNING) {
                    out.warnings.push(format!("frame {frame}: crowd vote std {sd:.2} exceeds {CROWD_STD_WARNING}"));
                }
                s
            }
        };
        if out.scores.insert(frame, score).is_some() {
            return Err(IngestError::DuplicateFrame(frame));
        }
    }
    Ok(out)
}

pub fn parse_complexity(path: &Path, source: ComplexitySource) -> Result<ComplexityFile, IngestError> {
    read_complexity(open(path)?, source)
}

pub fn write_complexity<W: Write>(
    w: W,
    scores: &BTreeMap<usize, ComplexityScore>,
    source: ComplexitySource,
) -> Result<(), IngestError> {
    let mut out = csv::Writer::from_writer(w);
    match source {
        ComplexitySource::Machine => out.write_record(["frame", "score"])?,
        ComplexitySource::Crowd => out.write_record(["frame", "v1", "v2", "v3"])?,
    }
    for (frame, s) in scores {
        let mut rec = vec![frame.to_string()];
        match (&s.raw_votes, source) {
            (Some(v), ComplexitySource::Crowd) => rec.extend(v.iter().map(|x| x.to_string())),
            (None, ComplexitySource::Crowd) => {
                return Err(IngestError::WrongVoteCount { frame: *frame });
            }
            _ => rec.push(s.value.to_string()),
        }
        out.write_record(&rec)?;
    }
    out.flush().map_err(csv::Error::from)?;
    Ok(())
}
