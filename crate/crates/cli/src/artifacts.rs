use std::collections::BTreeMap;
use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

/// Bumped whenever an artifact layout changes.
pub const FORMAT_VERSION: u32 = 1;

pub const EXIT_USAGE: i32 = 1;
pub const EXIT_INPUT: i32 = 2;
pub const EXIT_HYPOTHESIS: i32 = 3;

/// A command failure and the process exit code it maps to.
#[derive(Debug)]
pub struct Failure {
    pub code: i32,
    pub message: String,
}

impl Failure {
    pub fn input(message: impl Into<String>) -> Self {
        Self { code: EXIT_INPUT, message: message.into() }
    }

    pub fn hypothesis(message: impl Into<String>) -> Self {
        Self { code: EXIT_HYPOTHESIS, message: message.into() }
    }
}

impl fmt::Display for Failure {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.message)
    }
}

impl From<roadcx::PipelineError> for Failure {
    fn from(e: roadcx::PipelineError) -> Self {
        Self::input(e.to_string())
    }
}

pub type CmdResult<T = ()> = Result<T, Failure>;

pub fn io_failure(path: &Path, e: impl fmt::Display) -> Failure {
    Failure::input(format!("{}: {e}", path.display()))
}

/// JSON artifact body tagged with the config that produced it.
#[derive(Debug, Serialize, Deserialize)]
pub struct Stamped<T> {
    pub format_version: u32,
    pub config_hash: String,
    pub data: T,
}

pub fn write_file(path: &Path, bytes: impl AsRef<[u8]>) -> CmdResult {
    if let Some(dir) = path.parent() {
        fs::create_dir_all(dir).map_err(|e| io_failure(dir, e))?;
    }
    fs::write(path, bytes).map_err(|e| io_failure(path, e))
}

pub fn write_stamped<T: Serialize>(path: &Path, hash: &str, data: &T) -> CmdResult {
    let doc = Stamped { format_version: FORMAT_VERSION, config_hash: hash.to_string(), data };
    let mut text = serde_json::to_string_pretty(&doc).map_err(|e| io_failure(path, e))?;
    text.push('\n');
    write_file(path, text)
}

/// Reads an artifact written by `producer`, rejecting one from another config.
pub fn read_stamped<T: DeserializeOwned>(path: &Path, hash: &str, producer: &str) -> CmdResult<T> {
    let text = fs::read_to_string(path)
        .map_err(|e| Failure::input(format!("{}: {e} (run `roadcx {producer}` first)", path.display())))?;
    let doc: Stamped<T> = serde_json::from_str(&text).map_err(|e| io_failure(path, e))?;
    if doc.format_version != FORMAT_VERSION {
        return Err(Failure::input(format!(
            "{}: format version {} (expected {FORMAT_VERSION})",
            path.display(),
            doc.format_version
        )));
    }
    check_hash(path, &doc.config_hash, hash, producer)?;
    Ok(doc.data)
}

pub fn check_hash(path: &Path, found: &str, expected: &str, producer: &str) -> CmdResult {
    if found != expected {
        return Err(Failure::input(format!(
            "{} was written under config {found}, current config is {expected}; rerun `roadcx {producer}`",
            path.display()
        )));
    }
    Ok(())
}

#[derive(Debug, Serialize)]
struct Seeds {
    world: u64,
    split: u64,
    grid: u64,
}

#[derive(Debug, Serialize)]
struct RunManifest<'a> {
    format_version: u32,
    command: &'a str,
    version: &'a str,
    config_hash: &'a str,
    seeds: Seeds,
    timings_s: BTreeMap<String, f64>,
    outputs: Vec<String>,
}

/// Stage timings and outputs of one command, saved as `runs/<command>.json`.
pub struct RunLog {
    command: &'static str,
    timings: BTreeMap<String, f64>,
    outputs: Vec<PathBuf>,
    started: Instant,
}

impl RunLog {
    pub fn new(command: &'static str) -> Self {
        Self { command, timings: BTreeMap::new(), outputs: Vec::new(), started: Instant::now() }
    }

    pub fn stage<T>(&mut self, name: &str, f: impl FnOnce() -> CmdResult<T>) -> CmdResult<T> {
        let t = Instant::now();
        let out = f()?;
        self.timings.insert(name.to_string(), t.elapsed().as_secs_f64());
        Ok(out)
    }

    pub fn output(&mut self, path: &Path) {
        self.outputs.push(path.to_path_buf());
    }

    pub fn finish(mut self, cfg: &roadcx::PipelineConfig) -> CmdResult {
        self.timings.insert("total".into(), self.started.elapsed().as_secs_f64());
        let manifest = RunManifest {
            format_version: FORMAT_VERSION,
            command: self.command,
            version: env!("CARGO_PKG_VERSION"),
            config_hash: &cfg.hash(),
            seeds: Seeds { world: cfg.synth.seed, split: cfg.split.seed, grid: cfg.grid.seed },
            timings_s: self.timings,
            outputs: self.outputs.iter().map(|p| p.display().to_string()).collect(),
        };
        let path = cfg.output_dir.join("runs").join(format!("{}.json", self.command));
        let mut text = serde_json::to_string_pretty(&manifest).map_err(|e| io_failure(&path, e))?;
        text.push('\n');
        write_file(&path, text)
    }
}
