//! `roadcx`: runs the crash-density pipeline one stage at a time, or the
//! whole experiment grid, from a single JSON config.

mod artifacts;
mod commands;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use roadcx::eval::Variant;
use roadcx::ingest::ComplexitySource;
use roadcx::{Head, InputSet, ModelKind, PipelineConfig};
use serde::de::DeserializeOwned;

use artifacts::{io_failure, CmdResult, Failure, EXIT_USAGE};

#[derive(Debug, Parser)]
#[command(name = "roadcx", version, about = "Crash-density prediction with learned roadway complexity")]
struct Cli {
    /// JSON config; built-in defaults when omitted.
    #[arg(long, global = true, value_name = "FILE")]
    config: Option<PathBuf>,
    /// Override one config field, e.g. `--set split.seed=3`. Repeatable.
    #[arg(long = "set", global = true, value_name = "KEY=VALUE")]
    set: Vec<String>,
    #[command(subcommand)]
    command: Command,
}

/// Accepts the same snake_case names the config uses.
fn parse_name<T: DeserializeOwned>(s: &str) -> Result<T, String> {
    serde_json::from_value(serde_json::Value::String(s.to_string())).map_err(|e| e.to_string())
}

#[derive(Debug, Clone, Args)]
pub struct EncoderArgs {
    #[arg(long, default_value = "all", value_parser = parse_name::<InputSet>)]
    pub feature_set: InputSet,
    /// Hidden width; the configured main encoder's when omitted.
    #[arg(long)]
    pub hidden: Option<usize>,
    #[arg(long, value_parser = parse_name::<Head>)]
    pub head: Option<Head>,
    #[arg(long, value_parser = parse_name::<ComplexitySource>)]
    pub source: Option<ComplexitySource>,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Write a synthetic world with known ground truth.
    Synth {
        /// Target directory; defaults to the directory of `inputs.crashes`.
        #[arg(long)]
        dir: Option<PathBuf>,
    },
    /// Parse and validate every input file.
    Ingest,
    /// Sample frames and attach features and annotations.
    Featurize,
    /// Label frames by crash density and render the heatmap.
    Kde {
        /// Heatmap cell size in metres.
        #[arg(long, default_value_t = 100.0)]
        cell_size: f64,
    },
    /// Train one complexity encoder, or every encoder the grid needs.
    TrainEncoder {
        #[command(flatten)]
        encoder: EncoderArgs,
        #[arg(long, conflicts_with_all = ["feature_set", "hidden", "head", "source"])]
        all: bool,
    },
    /// Append an encoder's hidden activations to the feature matrix.
    Extract {
        #[command(flatten)]
        encoder: EncoderArgs,
    },
    /// Fit one crash-density classifier.
    TrainPredictor {
        #[arg(long, default_value = "rf", value_parser = parse_name::<ModelKind>)]
        model: ModelKind,
        #[arg(long, default_value = "all", value_parser = parse_name::<InputSet>)]
        feature_set: InputSet,
        #[arg(long, default_value = "baseline", value_parser = parse_name::<Variant>)]
        variant: Variant,
    },
    /// Compare the baseline and infused classifiers with McNemar's test.
    Evaluate {
        #[arg(long, default_value = "rf", value_parser = parse_name::<ModelKind>)]
        model: ModelKind,
        #[arg(long, default_value = "all", value_parser = parse_name::<InputSet>)]
        feature_set: InputSet,
        /// Exit 3 unless the infused model is significantly better.
        #[arg(long)]
        assert: bool,
    },
    /// Run the full experiment grid and write every table.
    Grid {
        /// Exit 3 unless the improvement hypothesis held.
        #[arg(long)]
        assert: bool,
    },
    /// Re-render a stored grid report after checking its provenance.
    Report,
}

fn load_config(cli: &Cli) -> CmdResult<PipelineConfig> {
    let mut cfg = match &cli.config {
        Some(path) => {
            let text = std::fs::read_to_string(path).map_err(|e| io_failure(path, e))?;
            PipelineConfig::from_json(&text).map_err(|e| io_failure(path, e))?
        }
        None => PipelineConfig::default(),
    };
    for s in &cli.set {
        cfg.set(s)?;
    }
    cfg.validate()?;
    Ok(cfg)
}

fn run(cli: Cli) -> CmdResult {
    let cfg = load_config(&cli)?;
    match cli.command {
        Command::Synth { dir } => commands::synth(&cfg, dir),
        Command::Ingest => commands::ingest(&cfg),
        Command::Featurize => commands::featurize(&cfg),
        Command::Kde { cell_size } => commands::kde(&cfg, cell_size),
        Command::TrainEncoder { encoder, all } => commands::train_encoder(&cfg, &encoder, all),
        Command::Extract { encoder } => commands::extract(&cfg, &encoder),
        Command::TrainPredictor { model, feature_set, variant } => {
            commands::train_predictor(&cfg, model, feature_set, variant)
        }
        Command::Evaluate { model, feature_set, assert } => commands::evaluate(&cfg, model, feature_set, assert),
        Command::Grid { assert } => commands::grid(&cfg, assert),
        Command::Report => commands::report(&cfg),
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { EXIT_USAGE as u8 } else { 0 });
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure { code, message }) => {
            eprintln!("error: {message}");
            ExitCode::from(code as u8)
        }
    }
}
