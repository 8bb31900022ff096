use serde::{Deserialize, Serialize};

use super::FeatureError;
use crate::ingest::{ContextualRecord, Question};

/// Declared answer levels of one question. With `positive` set the question
/// emits a single indicator column for that level; otherwise one column per
/// level.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QuestionLevels {
    pub question: Question,
    pub levels: Vec<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub positive: Option<String>,
}

impl QuestionLevels {
    fn new(question: Question, levels: &[&str]) -> Self {
        Self { question, levels: levels.iter().map(|s| s.to_string()).collect(), positive: None }
    }

    pub fn column_names(&self) -> Vec<String> {
        match &self.positive {
            Some(p) => vec![format!("{}_{p}", self.question)],
            None => self.levels.iter().map(|l| format!("{}_{l}", self.question)).collect(),
        }
    }

    pub fn column_count(&self) -> usize {
        if self.positive.is_some() {
            1
        } else {
            self.levels.len()
        }
    }
}

/// One-hot layout of the contextual answers.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct ContextualEncoding {
    pub questions: Vec<QuestionLevels>,
}

impl Default for ContextualEncoding {
    /// 19 columns: weather 5, road condition 2, traffic 2, visibility 1,
    /// time of day 2, layout 2, road type 3, lane width 2.
    fn default() -> Self {
        let mut visibility = QuestionLevels::new(Question::Visibility, &["clear", "reduced"]);
        visibility.positive = Some("reduced".into());
        Self {
            questions: vec![
                QuestionLevels::new(Question::Weather, &["clear", "rain", "snow", "fog", "overcast"]),
                QuestionLevels::new(Question::RoadCondition, &["dry", "wet"]),
                QuestionLevels::new(Question::TrafficCondition, &["light", "heavy"]),
                visibility,
                QuestionLevels::new(Question::TimeOfDay, &["day", "night"]),
                QuestionLevels::new(Question::RoadLayout, &["straight", "curved"]),
                QuestionLevels::new(Question::RoadType, &["highway", "urban", "rural"]),
                QuestionLevels::new(Question::LaneWidth, &["standard", "narrow"]),
            ],
        }
    }
}

impl ContextualEncoding {
    pub fn validate(&self) -> Result<(), FeatureError> {
        let mut seen = Vec::new();
        for q in &self.questions {
            if seen.contains(&q.question) {
                return Err(FeatureError::InvalidEncoding(format!("`{}` declared twice", q.question)));
            }
            seen.push(q.question);
            if q.levels.is_empty() {
                return Err(FeatureError::InvalidEncoding(format!("`{}` has no levels", q.question)));
            }
            if let Some(p) = &q.positive {
                if !q.levels.contains(p) {
                    return Err(FeatureError::InvalidEncoding(format!(
                        "positive level `{p}` of `{}` is not declared",
                        q.question
                    )));
                }
            }
        }
        Ok(())
    }

    pub fn column_names(&self) -> Vec<String> {
        self.questions.iter().flat_map(QuestionLevels::column_names).collect()
    }

    pub fn column_count(&self) -> usize {
        self.questions.iter().map(QuestionLevels::column_count).sum()
    }

    fn checked_answer<'a>(q: &QuestionLevels, rec: &'a ContextualRecord) -> Result<&'a str, FeatureError> {
        let a = rec.answer(q.question).ok_or(FeatureError::MissingAnswer(q.question))?;
        if !q.levels.iter().any(|l| l == a) {
            return Err(FeatureError::UnknownLevel { question: q.question, answer: a.to_string() });
        }
        Ok(a)
    }

    pub fn one_hot(&self, rec: &ContextualRecord) -> Result<Vec<f64>, FeatureError> {
        let mut out = Vec::with_capacity(self.column_count());
        for q in &self.questions {
            let a = Self::checked_answer(q, rec)?;
            match &q.positive {
                Some(p) => out.push(if a == p { 1.0 } else { 0.0 }),
                None => out.extend(q.levels.iter().map(|l| if l == a { 1.0 } else { 0.0 })),
            }
        }
        Ok(out)
    }

    /// Value of a single indicator column; `None` if the column is unknown
    /// or the record's answer is missing or undeclared.
    pub fn column_value(&self, rec: &ContextualRecord, column: &str) -> Option<f64> {
        for q in &self.questions {
            let Some(level) = column.strip_prefix(q.question.as_str()).and_then(|r| r.strip_prefix('_')) else {
                continue;
            };
            let declared = match &q.positive {
                Some(p) => p == level,
                None => q.levels.iter().any(|l| l == level),
            };
            if declared {
                let a = Self::checked_answer(q, rec).ok()?;
                return Some(if a == level { 1.0 } else { 0.0 });
            }
        }
        None
    }

    /// Inverse of [`one_hot`](Self::one_hot). A single-column question
    /// decodes to its positive level when set, otherwise to the first other
    /// declared level.
    pub fn decode(&self, values: &[f64]) -> Result<ContextualRecord, FeatureError> {
        if values.len() != self.column_count() {
            return Err(FeatureError::Shape(format!(
                "{} values for {} contextual columns",
                values.len(),
                self.column_count()
            )));
        }
        let mut answers = Vec::new();
        let mut at = 0;
        for q in &self.questions {
            let block = &values[at..at + q.column_count()];
            at += q.column_count();
            let level = match &q.positive {
                Some(p) if block[0] >= 0.5 => p.clone(),
                Some(p) => q.levels.iter().find(|l| *l != p).unwrap_or(p).clone(),
                None => {
                    let hot = block
                        .iter()
                        .position(|v| *v >= 0.5)
                        .ok_or_else(|| FeatureError::Shape(format!("no indicator set for `{}`", q.question)))?;
                    q.levels[hot].clone()
                }
            };
            answers.push((q.question, level));
        }
        Ok(ContextualRecord::from_answers(answers))
    }
}

/// A record answering every question with its first default level.
pub fn default_record() -> ContextualRecord {
    ContextualRecord::from_answers(
        ContextualEncoding::default().questions.into_iter().map(|q| (q.question, q.levels[0].clone())),
    )
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn nineteen_columns_in_declared_blocks() {
        let enc = ContextualEncoding::default();
        let counts: Vec<usize> = enc.questions.iter().map(|q| q.column_count()).collect();
        assert_eq!(counts, vec![5, 2, 2, 1, 2, 2, 3, 2]);
        assert_eq!(enc.column_names().len(), 19);
        assert_eq!(enc.column_count(), 19);
        enc.validate().unwrap();
    }

    #[test]
    fn weather_block() {
        let enc = ContextualEncoding::default();
        let v = enc.one_hot(&default_record()).unwrap();
        assert_eq!(&v[..5], &[1.0, 0.0, 0.0, 0.0, 0.0]);
    }

    #[test]
    fn visibility_single_column() {
        let enc = ContextualEncoding::default();
        let mut rec = default_record();
        assert_eq!(enc.column_value(&rec, "visibility_reduced"), Some(0.0));
        rec.answers.get_mut(&Question::Visibility).unwrap().value = "reduced".into();
        assert_eq!(enc.column_value(&rec, "visibility_reduced"), Some(1.0));
        assert_eq!(enc.column_value(&rec, "visibility_clear"), None);
    }

    #[test]
    fn unknown_level() {
        let enc = ContextualEncoding::default();
        let mut rec = default_record();
        rec.answers.get_mut(&Question::Weather).unwrap().value = "hail".into();
        assert!(matches!(enc.one_hot(&rec), Err(FeatureError::UnknownLevel { question: Question::Weather, .. })));
    }

    #[test]
    fn json_round_trip() {
        let enc = ContextualEncoding::default();
        let s = serde_json::to_string(&enc).unwrap();
        assert_eq!(serde_json::from_str::<ContextualEncoding>(&s).unwrap(), enc);
    }

    proptest! {
        #[test]
        fn decode_inverts_one_hot(picks in proptest::collection::vec(0usize..5, 8)) {
            let enc = ContextualEncoding::default();
            let rec = ContextualRecord::from_answers(
                enc.questions.iter().zip(&picks).map(|(q, p)| (q.question, q.levels[p % q.levels.len()].clone())),
            );
            let back = enc.decode(&enc.one_hot(&rec).unwrap()).unwrap();
            prop_assert_eq!(back, rec);
        }
    }
}
