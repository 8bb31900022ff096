use std::collections::BTreeMap;
use std::fmt;
use std::io::{Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{open, IngestError};

/// Contextual questions asked of the scene annotator, in canonical order.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Question {
    Weather,
    RoadCondition,
    TrafficCondition,
    Visibility,
    TimeOfDay,
    RoadLayout,
    RoadType,
    LaneWidth,
}

impl Question {
    pub const ALL: [Question; 8] = [
        Question::Weather,
        Question::RoadCondition,
        Question::TrafficCondition,
        Question::Visibility,
        Question::TimeOfDay,
        Question::RoadLayout,
        Question::RoadType,
        Question::LaneWidth,
    ];

    pub fn as_str(&self) -> &'static str {
        match self {
            Question::Weather => "weather",
            Question::RoadCondition => "road_condition",
            Question::TrafficCondition => "traffic_condition",
            Question::Visibility => "visibility",
            Question::TimeOfDay => "time_of_day",
            Question::RoadLayout => "road_layout",
            Question::RoadType => "road_type",
            Question::LaneWidth => "lane_width",
        }
    }
}

impl fmt::Display for Question {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// One annotation run: question → answer.
pub type RunAnswers = BTreeMap<Question, String>;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ContextualAnswer {
    pub value: String,
    /// Fraction of the three runs that gave `value`.
    pub agreement: f64,
}

/// Majority-voted contextual answers for one frame.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct ContextualRecord {
    pub answers: BTreeMap<Question, ContextualAnswer>,
}

impl ContextualRecord {
    /// A record with full agreement on every given answer.
    pub fn from_answers<I, S>(answers: I) -> Self
    where
        I: IntoIterator<Item = (Question, S)>,
        S: Into<String>,
    {
        Self {
            answers: answers
                .into_iter()
                .map(|(q, a)| (q, ContextualAnswer { value: a.into(), agreement: 1.0 }))
                .collect(),
        }
    }

    pub fn answer(&self, q: Question) -> Option<&str> {
        self.answers.get(&q).map(|a| a.value.as_str())
    }

    /// Questions answered by three different values.
    pub fn disagreements(&self) -> Vec<Question> {
        self.answers.iter().filter(|(_, a)| a.agreement < 0.5).map(|(q, _)| *q).collect()
    }
}

/// Combines exactly three runs. Per question the answer given at least twice
/// wins; if all three differ, run 1's answer is kept with agreement 1/3.
pub fn majority_vote(runs: &[RunAnswers]) -> Result<ContextualRecord, IngestError> {
    if runs.len() != 3 {
        return Err(IngestError::Invalid(format!("majority vote needs 3 runs, got {}", runs.len())));
    }
    let mut answers = BTreeMap::new();
    for q in Question::ALL {
        let mut given = Vec::with_capacity(3);
        for (i, run) in runs.iter().enumerate() {
            let a = run.get(&q).ok_or(IngestError::MissingAnswer { question: q, run: i + 1 })?;
            given.push(a.as_str());
        }
        let (value, votes) = given
            .iter()
            .map(|a| (*a, given.iter().filter(|b| *b == a).count()))
            .find(|(_, n)| *n >= 2)
            .unwrap_or((given[0], 1));
        answers.insert(q, ContextualAnswer { value: value.to_string(), agreement: votes as f64 / 3.0 });
    }
    Ok(ContextualRecord { answers })
}

/// The three raw runs for one frame, as stored on disk.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FrameRuns {
    pub frame: usize,
    pub runs: Vec<RunAnswers>,
}

pub fn read_contextual_runs<R: Read>(r: R) -> Result<BTreeMap<usize, Vec<RunAnswers>>, IngestError> {
    let entries: Vec<FrameRuns> = serde_json::from_reader(r)?;
    let mut out = BTreeMap::new();
    for e in entries {
        if e.runs.len() != 3 {
            return Err(IngestError::WrongRunCount { frame: e.frame, count: e.runs.len() });
        }
        if out.insert(e.frame, e.runs).is_some() {
            return Err(IngestError::DuplicateFrame(e.frame));
        }
    }
    Ok(out)
}

pub fn parse_contextual_runs(path: &Path) -> Result<BTreeMap<usize, Vec<RunAnswers>>, IngestError> {
    read_contextual_runs(open(path)?)
}

pub fn write_contextual_runs<W: Write>(w: W, frames: &BTreeMap<usize, Vec<RunAnswers>>) -> Result<(), IngestError> {
    let entries: Vec<FrameRuns> = frames.iter().map(|(f, runs)| FrameRuns { frame: *f, runs: runs.clone() }).collect();
    serde_json::to_writer(w, &entries)?;
    Ok(())
}
