//! CSV tables and the JSON manifest.

use std::collections::BTreeMap;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use serde::Serialize;
use thiserror::Error;

use crate::config::{RunConfig, Source};

/// Bumped whenever a column is added, removed or renamed.
pub const SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Error)]
pub enum OutputError {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}: {source}")]
    Csv {
        path: PathBuf,
        #[source]
        source: csv::Error,
    },
}

impl OutputError {
    fn io(path: &Path, source: std::io::Error) -> Self {
        OutputError::Io {
            path: path.to_path_buf(),
            source,
        }
    }
}

/// Seventeen significant digits, enough to round-trip any `f64`.
pub fn float(x: f64) -> String {
    format!("{x:.16e}")
}

/// One observable as a table with a fixed column schema.
#[derive(Debug, Clone, PartialEq)]
pub struct CsvTable {
    pub name: &'static str,
    pub columns: &'static [&'static str],
    pub rows: Vec<Vec<String>>,
}

impl CsvTable {
    pub fn new(name: &'static str, columns: &'static [&'static str]) -> Self {
        CsvTable {
            name,
            columns,
            rows: Vec::new(),
        }
    }

    pub fn push(&mut self, row: Vec<String>) {
        debug_assert_eq!(row.len(), self.columns.len(), "row width of {}", self.name);
        self.rows.push(row);
    }

    pub fn file_name(&self) -> String {
        format!("{}.csv", self.name)
    }

    /// Write under `dir`, preceded by `#` lines carrying the resolved
    /// config and seed.
    pub fn write(&self, dir: &Path, config: &RunConfig) -> Result<PathBuf, OutputError> {
        let path = dir.join(self.file_name());
        let mut file = fs::File::create(&path).map_err(|e| OutputError::io(&path, e))?;
        file.write_all(reproducibility_header(config).as_bytes())
            .map_err(|e| OutputError::io(&path, e))?;
        let mut w = csv::WriterBuilder::new()
            .terminator(csv::Terminator::Any(b'\n'))
            .from_writer(file);
        let csv_err = |source| OutputError::Csv {
            path: path.clone(),
            source,
        };
        w.write_record(self.columns).map_err(csv_err)?;
        for row in &self.rows {
            w.write_record(row).map_err(csv_err)?;
        }
        w.flush().map_err(|e| OutputError::io(&path, e))?;
        Ok(path)
    }
}

pub fn reproducibility_header(config: &RunConfig) -> String {
    let mut out = format!("# cwfsim schema_version = {SCHEMA_VERSION}\n# seed = {}\n", config.seed);
    for line in config.to_toml().lines() {
        out.push('#');
        if !line.is_empty() {
            out.push(' ');
            out.push_str(line);
        }
        out.push('\n');
    }
    out
}

/// Everything after the `#` header, for comparing runs.
pub fn csv_body(text: &str) -> &str {
    let mut offset = 0;
    for line in text.split_inclusive('\n') {
        if !line.starts_with('#') {
            break;
        }
        offset += line.len();
    }
    &text[offset..]
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct InvariantCheck {
    pub name: String,
    pub pass: bool,
    pub detail: String,
}

impl InvariantCheck {
    pub fn new(name: &str, pass: bool, detail: impl Into<String>) -> Self {
        InvariantCheck {
            name: name.into(),
            pass,
            detail: detail.into(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FileEntry {
    pub file: String,
    pub columns: Vec<String>,
    pub rows: usize,
}

#[derive(Debug, Clone, Serialize)]
pub struct Manifest {
    pub schema_version: u32,
    pub preset: String,
    pub seed: u64,
    /// Set for device presets: true when no scattering channel is active.
    pub ballistic: Option<bool>,
    pub config: RunConfig,
    pub provenance: BTreeMap<String, Source>,
    pub invariants: Vec<InvariantCheck>,
    pub files: Vec<FileEntry>,
    pub timings_s: BTreeMap<String, f64>,
    pub summary: serde_json::Value,
}

impl Manifest {
    pub fn passed(&self) -> bool {
        self.invariants.iter().all(|c| c.pass)
    }

    pub fn write(&self, dir: &Path) -> Result<PathBuf, OutputError> {
        let path = dir.join("manifest.json");
        let text = serde_json::to_string_pretty(self).expect("manifest serializes");
        fs::write(&path, text + "\n").map_err(|e| OutputError::io(&path, e))?;
        Ok(path)
    }
}

pub fn create_dir(dir: &Path) -> Result<(), OutputError> {
    fs::create_dir_all(dir).map_err(|e| OutputError::io(dir, e))
}
