use std::io::Write;
use std::path::{Path, PathBuf};

use serde::Serialize;
use tempfile::NamedTempFile;

use crate::CliError;

#[derive(Debug, Clone, Serialize, PartialEq)]
pub struct CheckOutcome {
    pub name: String,
    pub value: f64,
    pub tolerance: f64,
    pub pass: bool,
}

impl CheckOutcome {
    /// Passes when `value ≤ tolerance`.
    pub fn at_most(name: &str, value: f64, tolerance: f64) -> Self {
        Self { name: name.into(), value, tolerance, pass: value.is_finite() && value <= tolerance }
    }

    /// Passes when `value ≥ tolerance`.
    pub fn at_least(name: &str, value: f64, tolerance: f64) -> Self {
        Self { name: name.into(), value, tolerance, pass: value >= tolerance }
    }

    pub fn flag(name: &str, ok: bool) -> Self {
        Self { name: name.into(), value: if ok { 1.0 } else { 0.0 }, tolerance: 1.0, pass: ok }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct RunRecord {
    pub command: String,
    pub config_hash: String,
    pub code_version: String,
    pub wall_clock_s: f64,
    pub checks: Vec<CheckOutcome>,
    pub artifacts: Vec<String>,
}

impl RunRecord {
    pub fn passed(&self) -> bool {
        self.checks.iter().all(|c| c.pass)
    }

    pub fn failing(&self) -> Vec<&CheckOutcome> {
        self.checks.iter().filter(|c| !c.pass).collect()
    }
}

/// Artifacts staged as temporary files in the output directory and renamed into place together.
pub struct Staging {
    dir: PathBuf,
    files: Vec<(NamedTempFile, String)>,
}

impl Staging {
    pub fn new(dir: &Path) -> Result<Self, CliError> {
        std::fs::create_dir_all(dir)?;
        Ok(Self { dir: dir.to_path_buf(), files: Vec::new() })
    }

    pub fn bytes(&mut self, name: &str, data: &[u8]) -> Result<(), CliError> {
        let mut f = NamedTempFile::new_in(&self.dir)?;
        f.write_all(data)?;
        f.flush()?;
        self.files.push((f, name.to_string()));
        Ok(())
    }

    pub fn csv<R: Serialize>(&mut self, name: &str, rows: &[R]) -> Result<(), CliError> {
        let mut w = csv::Writer::from_writer(Vec::new());
        for r in rows {
            w.serialize(r)?;
        }
        let data = w.into_inner().map_err(|e| CliError::Io(e.into_error()))?;
        self.bytes(name, &data)
    }

    pub fn json<T: Serialize>(&mut self, name: &str, value: &T) -> Result<(), CliError> {
        let mut data = serde_json::to_vec_pretty(value)?;
        data.push(b'\n');
        self.bytes(name, &data)
    }

    pub fn names(&self) -> Vec<String> {
        self.files.iter().map(|f| f.1.clone()).collect()
    }

    pub fn commit(self) -> Result<Vec<PathBuf>, CliError> {
        let mut out = Vec::with_capacity(self.files.len());
        for (f, name) in self.files {
            let path = self.dir.join(&name);
            f.persist(&path).map_err(|e| CliError::Io(e.error))?;
            out.push(path);
        }
        Ok(out)
    }
}
