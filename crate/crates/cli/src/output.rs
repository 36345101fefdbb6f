//! Artifact writing. Files are named after the task, and every run writes a
//! manifest next to its outputs. Nothing time-dependent is recorded, so the
//! same config and seed reproduce the same bytes.

use std::path::{Path, PathBuf};

use serde::Serialize;

use crate::config::{Format, RunConfig, TaskKind};
use crate::error::CliResult;

/// Environment variable naming the default output directory.
pub const OUT_ENV: &str = "TWOTEMP_OUT";
pub const DEFAULT_OUT: &str = "twotemp-out";

/// Precedence: explicit flag, config file, environment, built-in default.
pub fn resolve_dir(flag: Option<&Path>, cfg: &RunConfig) -> PathBuf {
    if let Some(p) = flag {
        return p.to_path_buf();
    }
    if let Some(p) = &cfg.output.directory {
        return p.clone();
    }
    match std::env::var_os(OUT_ENV) {
        Some(p) if !p.is_empty() => PathBuf::from(p),
        _ => PathBuf::from(DEFAULT_OUT),
    }
}

#[derive(Debug, Serialize)]
struct Manifest<'a> {
    tool: &'static str,
    version: &'static str,
    core_version: &'static str,
    task: &'static str,
    seed: u64,
    artifacts: &'a [String],
    config: &'a RunConfig,
}

pub struct Writer {
    dir: PathBuf,
    task: TaskKind,
    artifacts: Vec<String>,
}

impl Writer {
    pub fn new(dir: PathBuf, task: TaskKind) -> CliResult<Self> {
        std::fs::create_dir_all(&dir)?;
        Ok(Writer { dir, task, artifacts: Vec::new() })
    }

    pub fn dir(&self) -> &Path {
        &self.dir
    }

    fn path(&mut self, suffix: &str) -> PathBuf {
        let name = format!("{}{suffix}", self.task.name());
        self.artifacts.push(name.clone());
        self.dir.join(name)
    }

    pub fn json<T: Serialize>(&mut self, cfg: &RunConfig, value: &T) -> CliResult<()> {
        if cfg.wants(Format::Json) {
            let p = self.path(".json");
            let mut text = serde_json::to_string_pretty(value)?;
            text.push('\n');
            std::fs::write(p, text)?;
        }
        Ok(())
    }

    /// Rows are written with the serde field names as the header.
    pub fn csv<T: Serialize>(&mut self, cfg: &RunConfig, suffix: &str, rows: &[T]) -> CliResult<()> {
        if cfg.wants(Format::Csv) {
            let p = self.path(&format!("{suffix}.csv"));
            let mut w = csv::Writer::from_path(p)?;
            for r in rows {
                w.serialize(r)?;
            }
            w.flush()?;
        }
        Ok(())
    }

    pub fn finish(mut self, cfg: &RunConfig) -> CliResult<Vec<String>> {
        let name = format!("{}.manifest.json", self.task.name());
        let arts = self.artifacts.clone();
        let m = Manifest {
            tool: env!("CARGO_PKG_NAME"),
            version: env!("CARGO_PKG_VERSION"),
            core_version: twotemp::VERSION,
            task: self.task.name(),
            seed: cfg.numerics.seed,
            artifacts: &arts,
            config: cfg,
        };
        let mut text = serde_json::to_string_pretty(&m)?;
        text.push('\n');
        std::fs::write(self.dir.join(&name), text)?;
        self.artifacts.push(name);
        Ok(self.artifacts)
    }
}
