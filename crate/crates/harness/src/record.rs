//! Run directories and `key = value` summaries.
//!
//! Layout of one run directory:
//!
//! ```text
//! config.toml          canonical copy of the configuration
//! checkpoints/         c_NNNN.bin fields plus index.txt (`t file` lines)
//! diagnostics*.csv     diagnostics streams
//! parameters.csv       modulation parameters, Mod_j and Scal_j
//! pair.csv, cauchy.csv experiment-specific tables
//! noise_paths.csv      Brownian paths, for noisy runs
//! summary.txt          key = value lines
//! run.log              warnings and status
//! ```

use std::fs;
use std::path::{Path, PathBuf};

use bubblelab::evolution::Checkpoint;
use bubblelab::io::{write_checkpoint, write_index, IndexEntry};

use crate::config::RunConfig;
use crate::{HarnessError, Result};

pub const SUMMARY_FILE: &str = "summary.txt";
pub const CONFIG_FILE: &str = "config.toml";
pub const LOG_FILE: &str = "run.log";
pub const VERSION: &str = env!("CARGO_PKG_VERSION");

/// Ordered `key = value` pairs.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct Summary {
    pub entries: Vec<(String, String)>,
}

impl Summary {
    pub fn set(&mut self, key: impl Into<String>, value: impl ToString) {
        let key = key.into();
        let value = value.to_string();
        match self.entries.iter_mut().find(|(k, _)| *k == key) {
            Some(e) => e.1 = value,
            None => self.entries.push((key, value)),
        }
    }

    /// Stores a float in round-trip `{:e}` form.
    pub fn set_f64(&mut self, key: impl Into<String>, value: f64) {
        self.set(key, format!("{value:e}"));
    }

    pub fn get(&self, key: &str) -> Option<&str> {
        self.entries.iter().find(|(k, _)| k == key).map(|(_, v)| v.as_str())
    }

    pub fn get_f64(&self, key: &str) -> Option<f64> {
        self.get(key).and_then(|v| v.parse().ok())
    }

    pub fn to_text(&self) -> String {
        self.entries.iter().map(|(k, v)| format!("{k} = {v}\n")).collect()
    }

    pub fn parse(text: &str) -> Result<Self> {
        let mut s = Summary::default();
        for (n, line) in text.lines().enumerate() {
            if line.trim().is_empty() {
                continue;
            }
            let (k, v) = line
                .split_once(" = ")
                .ok_or_else(|| HarnessError::Report(format!("summary line {} is not `key = value`", n + 1)))?;
            s.entries.push((k.trim().to_string(), v.trim().to_string()));
        }
        Ok(s)
    }

    pub fn read(dir: &Path) -> Result<Self> {
        Self::parse(&fs::read_to_string(dir.join(SUMMARY_FILE))?)
    }
}

/// A run directory being written.
#[derive(Debug)]
pub struct RunDir {
    pub path: PathBuf,
    log: Vec<String>,
}

impl RunDir {
    /// Creates (or reuses) `root/name` and writes the config copy.
    pub fn create(root: &Path, config: &RunConfig) -> Result<Self> {
        let path = root.join(&config.name);
        fs::create_dir_all(&path)?;
        fs::write(path.join(CONFIG_FILE), config.to_toml())?;
        Ok(RunDir { path, log: Vec::new() })
    }

    pub fn log(&mut self, line: impl Into<String>) {
        self.log.push(line.into());
    }

    pub fn write(&self, file: &str, text: &str) -> Result<()> {
        fs::write(self.path.join(file), text)?;
        Ok(())
    }

    /// Writes every checkpoint under `checkpoints/<sub>` with an index.
    pub fn write_checkpoints(&self, sub: &str, checkpoints: &[Checkpoint]) -> Result<()> {
        let dir = if sub.is_empty() { self.path.join("checkpoints") } else { self.path.join("checkpoints").join(sub) };
        fs::create_dir_all(&dir)?;
        let mut index = Vec::with_capacity(checkpoints.len());
        for (i, c) in checkpoints.iter().enumerate() {
            let file = format!("c_{i:04}.bin");
            write_checkpoint(&dir.join(&file), c.t, &c.field)?;
            index.push(IndexEntry { t: c.t, file });
        }
        write_index(&dir.join("index.txt"), &index)?;
        Ok(())
    }

    pub fn finish(&self, summary: &Summary) -> Result<()> {
        self.write(SUMMARY_FILE, &summary.to_text())?;
        let mut log = self.log.join("\n");
        log.push('\n');
        self.write(LOG_FILE, &log)
    }
}
