use std::fmt::Write as _;
use std::io::Write;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::grid::Variant;
use super::metrics::ComparisonResult;
use crate::encoder::InputSet;
use crate::ingest::ComplexitySource;
use crate::models::{ModelConfigs, ModelKind};

/// Hex SHA-256 of the compact JSON form of `v`.
pub fn config_hash<T: Serialize>(v: &T) -> String {
    let json = serde_json::to_string(v).expect("config serializes");
    hex::encode(Sha256::digest(json.as_bytes()))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EncoderRow {
    pub encoder: String,
    pub source: ComplexitySource,
    pub feature_set: InputSet,
    pub train_loss: f64,
    pub test_loss: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub test_accuracy: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MainRow {
    pub feature_set: InputSet,
    pub model: ModelKind,
    pub baseline: Option<f64>,
    pub plus_infused: Option<f64>,
    pub infused_alone: Option<f64>,
    pub plus_index: Option<f64>,
    /// Baseline against plus-infused on the test rows.
    pub mcnemar: Option<ComparisonResult>,
}

impl MainRow {
    pub fn empty(feature_set: InputSet, model: ModelKind) -> Self {
        Self {
            feature_set,
            model,
            baseline: None,
            plus_infused: None,
            infused_alone: None,
            plus_index: None,
            mcnemar: None,
        }
    }

    pub fn set(&mut self, v: Variant, acc: f64) {
        let slot = match v {
            Variant::Baseline => &mut self.baseline,
            Variant::PlusInfused => &mut self.plus_infused,
            Variant::InfusedAlone => &mut self.infused_alone,
            Variant::PlusIndex => &mut self.plus_index,
        };
        *slot = Some(acc);
    }

    /// Plus-infused minus baseline accuracy.
    pub fn difference(&self) -> Option<f64> {
        Some(self.plus_infused? - self.baseline?)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SourceRow {
    pub source: ComplexitySource,
    pub feature_set: InputSet,
    pub plus_infused: f64,
    pub infused_alone: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AblationRow {
    pub encoder: String,
    pub feature_set: InputSet,
    pub plus_infused: f64,
}

/// Whether adding the infused features significantly improved `model` on
/// `feature_set`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Hypothesis {
    pub feature_set: InputSet,
    pub model: ModelKind,
    pub alpha: f64,
    pub held: bool,
    pub comparison: Option<ComparisonResult>,
}

impl Hypothesis {
    pub fn judge(rows: &[MainRow], feature_set: InputSet, model: ModelKind, alpha: f64) -> Self {
        let comparison = rows.iter().find(|r| r.feature_set == feature_set && r.model == model).and_then(|r| r.mcnemar);
        let held = comparison.is_some_and(|c| c.accuracy_b > c.accuracy_a && c.p_value < alpha);
        Self { feature_set, model, alpha, held, comparison }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridReport {
    pub config_hash: String,
    pub seed: u64,
    pub split_seed: Option<u64>,
    pub n_train: usize,
    pub n_test: usize,
    pub model_configs: ModelConfigs,
    pub encoder_epochs: usize,
    /// Encoder losses per architecture (main score source).
    pub encoders: Vec<EncoderRow>,
    /// Accuracy per feature set, model and variant.
    pub main: Vec<MainRow>,
    /// Main encoder architecture per score source.
    pub source_encoders: Vec<EncoderRow>,
    pub source_accuracy: Vec<SourceRow>,
    pub encoder_ablation: Vec<AblationRow>,
    pub hypothesis: Hypothesis,
}

fn pct(v: Option<f64>) -> String {
    v.map(|x| format!("{x:.2}")).unwrap_or_else(|| "-".into())
}

fn loss(v: f64) -> String {
    format!("{v:.4}")
}

fn p_value(c: &Option<ComparisonResult>) -> String {
    c.map(|c| format!("{:.4}", c.p_value)).unwrap_or_else(|| "-".into())
}

fn source_label(s: ComplexitySource) -> &'static str {
    match s {
        ComplexitySource::Machine => "Machine",
        ComplexitySource::Crowd => "Crowd",
    }
}

/// Left-aligns the first `left` columns and right-aligns the rest.
fn render(out: &mut String, title: &str, header: &[&str], rows: &[Vec<String>], left: usize) {
    let mut width: Vec<usize> = header.iter().map(|h| h.len()).collect();
    for r in rows {
        for (w, c) in width.iter_mut().zip(r) {
            *w = (*w).max(c.len());
        }
    }
    let line = |cells: Vec<&str>| {
        let parts: Vec<String> = cells
            .iter()
            .enumerate()
            .map(|(i, c)| if i < left { format!("{c:<w$}", w = width[i]) } else { format!("{c:>w$}", w = width[i]) })
            .collect();
        parts.join("  ").trim_end().to_string()
    };
    let _ = writeln!(out, "{title}");
    let head = line(header.to_vec());
    let _ = writeln!(out, "{head}");
    let _ = writeln!(out, "{}", "-".repeat(head.len()));
    for r in rows {
        let _ = writeln!(out, "{}", line(r.iter().map(String::as_str).collect()));
    }
    let _ = writeln!(out);
}

impl GridReport {
    fn encoder_rows(rows: &[EncoderRow], by_source: bool) -> Vec<Vec<String>> {
        rows.iter()
            .map(|r| {
                vec![
                    if by_source { source_label(r.source).to_string() } else { r.encoder.clone() },
                    r.feature_set.label().to_string(),
                    loss(r.train_loss),
                    loss(r.test_loss),
                ]
            })
            .collect()
    }

    fn main_rows(&self) -> Vec<Vec<String>> {
        self.main
            .iter()
            .map(|r| {
                vec![
                    r.feature_set.label().to_string(),
                    r.model.label().to_string(),
                    pct(r.baseline),
                    pct(r.plus_infused),
                    pct(r.difference()),
                    pct(r.infused_alone),
                    pct(r.plus_index),
                    p_value(&r.mcnemar),
                ]
            })
            .collect()
    }

    const MAIN_HEADER: [&'static str; 8] =
        ["Input features", "Model", "Baseline", "+ Infused", "Difference", "Infused alone", "+ Index", "McNemar p"];

    /// All five tables as aligned plain text.
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(out, "config {}", self.config_hash);
        let _ = writeln!(
            out,
            "seed {}  split seed {}  train {}  test {}  encoder epochs {}",
            self.seed,
            self.split_seed.map(|s| s.to_string()).unwrap_or_else(|| "-".into()),
            self.n_train,
            self.n_test,
            self.encoder_epochs
        );
        let _ = writeln!(out);
        render(
            &mut out,
            "Encoder loss (RMSE or cross-entropy)",
            &["Encoder", "Input features", "Train", "Test"],
            &Self::encoder_rows(&self.encoders, false),
            2,
        );
        render(&mut out, "Test accuracy (%)", &Self::MAIN_HEADER, &self.main_rows(), 2);
        render(
            &mut out,
            "Encoder loss by score source",
            &["Source", "Input features", "Train", "Test"],
            &Self::encoder_rows(&self.source_encoders, true),
            2,
        );
        let rows: Vec<Vec<String>> = self
            .source_accuracy
            .iter()
            .map(|r| {
                vec![
                    source_label(r.source).to_string(),
                    r.feature_set.label().to_string(),
                    pct(Some(r.plus_infused)),
                    pct(Some(r.infused_alone)),
                ]
            })
            .collect();
        render(
            &mut out,
            &format!("{} accuracy (%) by score source", self.hypothesis.model.label()),
            &["Source", "Input features", "+ Infused", "Infused alone"],
            &rows,
            2,
        );
        let rows: Vec<Vec<String>> = self
            .encoder_ablation
            .iter()
            .map(|r| vec![r.encoder.clone(), r.feature_set.label().to_string(), pct(Some(r.plus_infused))])
            .collect();
        render(
            &mut out,
            &format!("{} accuracy (%) by encoder", self.hypothesis.model.label()),
            &["Encoder", "Input features", "+ Infused"],
            &rows,
            2,
        );
        let h = &self.hypothesis;
        let _ = writeln!(
            out,
            "hypothesis ({} on {}, alpha {}): {}",
            h.model.label(),
            h.feature_set.label(),
            h.alpha,
            if h.held { "held" } else { "not held" }
        );
        out
    }

    /// The accuracy table as CSV with a leading config comment.
    pub fn write_main_csv<W: Write>(&self, mut w: W) -> Result<(), csv::Error> {
        writeln!(w, "# config {}", self.config_hash).map_err(csv::Error::from)?;
        let mut out = csv::Writer::from_writer(w);
        out.write_record([
            "feature_set",
            "model",
            "baseline",
            "plus_infused",
            "difference",
            "infused_alone",
            "plus_index",
            "mcnemar_b",
            "mcnemar_c",
            "mcnemar_chi2",
            "mcnemar_p",
        ])?;
        let opt = |v: Option<f64>| v.map(|x| x.to_string()).unwrap_or_default();
        for r in &self.main {
            let m = r.mcnemar;
            out.write_record([
                r.feature_set.as_str().to_string(),
                r.model.as_str().to_string(),
                opt(r.baseline),
                opt(r.plus_infused),
                opt(r.difference()),
                opt(r.infused_alone),
                opt(r.plus_index),
                m.map(|m| m.b.to_string()).unwrap_or_default(),
                m.map(|m| m.c.to_string()).unwrap_or_default(),
                opt(m.map(|m| m.chi2)),
                opt(m.map(|m| m.p_value)),
            ])?;
        }
        out.flush()?;
        Ok(())
    }

    /// Encoder rows from both encoder tables as CSV.
    pub fn write_encoder_csv<W: Write>(&self, mut w: W) -> Result<(), csv::Error> {
        writeln!(w, "# config {}", self.config_hash).map_err(csv::Error::from)?;
        let mut out = csv::Writer::from_writer(w);
        out.write_record(["encoder", "source", "feature_set", "train_loss", "test_loss", "test_accuracy"])?;
        let mut seen = Vec::new();
        for r in self.encoders.iter().chain(&self.source_encoders) {
            if seen.contains(&r) {
                continue;
            }
            seen.push(r);
            out.write_record([
                r.encoder.clone(),
                r.source.as_str().to_string(),
                r.feature_set.as_str().to_string(),
                r.train_loss.to_string(),
                r.test_loss.to_string(),
                r.test_accuracy.map(|a| a.to_string()).unwrap_or_default(),
            ])?;
        }
        out.flush()?;
        Ok(())
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }

    pub fn from_json(s: &str) -> Result<Self, serde_json::Error> {
        serde_json::from_str(s)
    }
}
