use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::time::Instant;

use anyhow::{Context, Result};
use serde::Serialize;
use serde_json::Value;

/// Record of one command invocation, written as `manifest.json` next to its outputs.
#[derive(Debug, Serialize)]
pub struct RunManifest {
    pub command: String,
    pub args: Vec<String>,
    pub config: Value,
    pub seed: u64,
    pub versions: BTreeMap<String, String>,
    pub timings: BTreeMap<String, f64>,
    pub outputs: Vec<PathBuf>,
    pub warnings: Vec<String>,
    /// Command-specific entries.
    pub extra: BTreeMap<String, Value>,
    #[serde(skip)]
    start: Option<Instant>,
}

impl RunManifest {
    pub fn new(command: &str, seed: u64) -> Self {
        let mut versions = BTreeMap::new();
        versions.insert("regimewatch-cli".into(), env!("CARGO_PKG_VERSION").into());
        versions.insert("rayon_threads".into(), rayon::current_num_threads().to_string());
        Self {
            command: command.into(),
            args: std::env::args().skip(1).collect(),
            config: Value::Null,
            seed,
            versions,
            timings: BTreeMap::new(),
            outputs: Vec::new(),
            warnings: Vec::new(),
            extra: BTreeMap::new(),
            start: Some(Instant::now()),
        }
    }

    pub fn config<T: Serialize>(&mut self, cfg: &T) -> Result<()> {
        self.config = serde_json::to_value(cfg)?;
        Ok(())
    }

    pub fn output(&mut self, path: &Path) {
        self.outputs.push(path.to_path_buf());
    }

    pub fn extra<T: Serialize>(&mut self, key: &str, value: &T) -> Result<()> {
        self.extra.insert(key.into(), serde_json::to_value(value)?);
        Ok(())
    }

    pub fn warn(&mut self, msg: String) {
        log::warn!("{msg}");
        self.warnings.push(msg);
    }

    pub fn write(mut self, dir: &Path) -> Result<()> {
        if let Some(s) = self.start {
            self.timings.insert("wall_clock_s".into(), s.elapsed().as_secs_f64());
        }
        let path = dir.join("manifest.json");
        std::fs::write(&path, serde_json::to_string_pretty(&self)?).with_context(|| format!("writing {}", path.display()))
    }
}
