//! Result directories: CSV files plus a JSON manifest per experiment.

use std::path::{Path, PathBuf};
use std::time::Instant;

use chrono::{SecondsFormat, Utc};
use serde::Serialize;

use crate::error::CliError;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum SeedSource {
    Default,
    Config,
    Environment,
    Flag,
}

#[derive(Serialize)]
struct Manifest<'a> {
    kind: &'a str,
    version: &'a str,
    config_hash: &'a str,
    seed: u64,
    seed_source: SeedSource,
    workers: usize,
    started: String,
    finished: String,
    wall_seconds: f64,
    files: &'a [String],
    summary: &'a serde_json::Value,
}

pub struct ResultStore {
    dir: PathBuf,
    kind: &'static str,
    files: Vec<String>,
    started: String,
    clock: Instant,
}

impl ResultStore {
    pub fn create(root: &Path, kind: &'static str) -> Result<Self, CliError> {
        let dir = root.join(kind);
        std::fs::create_dir_all(&dir)
            .map_err(|e| CliError::Runtime(format!("output directory {} not writable: {e}", dir.display())))?;
        Ok(ResultStore {
            dir,
            kind,
            files: Vec::new(),
            started: now(),
            clock: Instant::now(),
        })
    }

    pub fn dir(&self) -> &Path {
        &self.dir
    }

    pub fn path(&mut self, name: &str) -> PathBuf {
        if !self.files.iter().any(|f| f == name) {
            self.files.push(name.to_string());
        }
        self.dir.join(name)
    }

    pub fn write_csv<T: Serialize>(&mut self, name: &str, rows: &[T]) -> Result<PathBuf, CliError> {
        let path = self.path(name);
        let mut w = csv::Writer::from_path(&path)?;
        for r in rows {
            w.serialize(r)?;
        }
        w.flush()?;
        Ok(path)
    }

    /// Writes rows with an explicit header, for schemas whose width depends on
    /// the dimension.
    pub fn write_table(&mut self, name: &str, header: &[String], rows: &[Vec<String>]) -> Result<PathBuf, CliError> {
        let path = self.path(name);
        let mut w = csv::Writer::from_path(&path)?;
        w.write_record(header)?;
        for r in rows {
            w.write_record(r)?;
        }
        w.flush()?;
        Ok(path)
    }

    pub fn write_text(&mut self, name: &str, text: &str) -> Result<PathBuf, CliError> {
        let path = self.path(name);
        std::fs::write(&path, text)?;
        Ok(path)
    }

    pub fn finish(
        self,
        config_hash: &str,
        seed: u64,
        seed_source: SeedSource,
        summary: serde_json::Value,
    ) -> Result<PathBuf, CliError> {
        let manifest = Manifest {
            kind: self.kind,
            version: env!("CARGO_PKG_VERSION"),
            config_hash,
            seed,
            seed_source,
            workers: rayon::current_num_threads(),
            started: self.started.clone(),
            finished: now(),
            wall_seconds: self.clock.elapsed().as_secs_f64(),
            files: &self.files,
            summary: &summary,
        };
        let path = self.dir.join("manifest.json");
        let text = serde_json::to_string_pretty(&manifest).map_err(|e| CliError::Runtime(e.to_string()))?;
        std::fs::write(&path, text + "\n")?;
        Ok(path)
    }
}

fn now() -> String {
    Utc::now().to_rfc3339_opts(SecondsFormat::Millis, true)
}

/// Formats a float so that it parses back to the same value.
pub fn num(x: f64) -> String {
    format!("{x}")
}
