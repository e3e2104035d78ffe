//! Output files: atomic writes, CSV tables and the run manifest.

use std::io::Write;
use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use serde::Serialize;
use serde_json::Value;

pub const MANIFEST_NAME: &str = "manifest.json";
pub const MANIFEST_MARKER: &str = "synclab_manifest";

/// Collects output files for one run and writes each one atomically
/// (temporary file in the target directory, then rename).
pub struct OutputDir {
    pub dir: PathBuf,
    pub written: Vec<String>,
}

impl OutputDir {
    pub fn create(dir: &Path) -> Result<Self> {
        std::fs::create_dir_all(dir).with_context(|| format!("creating output directory {}", dir.display()))?;
        Ok(OutputDir { dir: dir.to_path_buf(), written: Vec::new() })
    }

    pub fn write_bytes(&mut self, name: &str, bytes: &[u8]) -> Result<PathBuf> {
        let path = self.dir.join(name);
        let mut tmp = tempfile::NamedTempFile::new_in(&self.dir).context("creating temporary file")?;
        tmp.write_all(bytes)?;
        tmp.flush()?;
        tmp.persist(&path).with_context(|| format!("writing {}", path.display()))?;
        if !self.written.iter().any(|w| w == name) {
            self.written.push(name.to_string());
        }
        Ok(path)
    }

    pub fn write_json<T: Serialize>(&mut self, name: &str, value: &T) -> Result<PathBuf> {
        let mut s = serde_json::to_string_pretty(value)?;
        s.push('\n');
        self.write_bytes(name, s.as_bytes())
    }

    pub fn write_table(&mut self, name: &str, table: &Table) -> Result<PathBuf> {
        self.write_bytes(name, &table.to_csv()?)
    }
}

/// A CSV table; floats use Rust's shortest round-trip formatting.
pub struct Table {
    pub header: Vec<String>,
    pub rows: Vec<Vec<String>>,
}

impl Table {
    pub fn new(header: &[&str]) -> Self {
        Table { header: header.iter().map(|s| s.to_string()).collect(), rows: Vec::new() }
    }

    pub fn push(&mut self, row: Vec<String>) {
        debug_assert_eq!(row.len(), self.header.len());
        self.rows.push(row);
    }

    pub fn to_csv(&self) -> Result<Vec<u8>> {
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record(&self.header)?;
        for r in &self.rows {
            w.write_record(r)?;
        }
        w.into_inner().map_err(|e| anyhow::anyhow!("{e}"))
    }
}

pub fn f(x: f64) -> String {
    format!("{x}")
}

#[derive(Debug, Serialize)]
pub struct RunManifest {
    pub synclab_manifest: u32,
    pub command: String,
    pub version: String,
    pub config: Value,
    pub wall_time_s: f64,
    pub outputs: Vec<String>,
    pub diverged: bool,
    pub summary: Value,
}

impl RunManifest {
    pub fn new(command: &str, config: Value) -> Self {
        RunManifest {
            synclab_manifest: 1,
            command: command.to_string(),
            version: env!("CARGO_PKG_VERSION").to_string(),
            config,
            wall_time_s: 0.0,
            outputs: Vec::new(),
            diverged: false,
            summary: Value::Null,
        }
    }
}

/// Reads a run config; a manifest file is accepted too, in which case its
/// echoed config is used (replay).
pub fn load_config(path: &Path, command: &str) -> Result<Value, crate::Failure> {
    let text = std::fs::read_to_string(path).map_err(|e| crate::Failure::Config(format!("reading {}: {e}", path.display())))?;
    let value: Value = serde_json::from_str(&text).map_err(|e| crate::Failure::Config(format!("parsing {}: {e}", path.display())))?;
    if value.get(MANIFEST_MARKER).is_some() {
        let recorded = value.get("command").and_then(Value::as_str).unwrap_or_default();
        if recorded != command {
            return Err(crate::Failure::Config(format!("manifest records command `{recorded}`, not `{command}`")));
        }
        return value.get("config").cloned().ok_or_else(|| crate::Failure::Config("manifest has no config".into()));
    }
    Ok(value)
}
