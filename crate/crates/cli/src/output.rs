//! Tabular artifacts, their validation and serialization.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use serde::Serialize;
use serde_json::{json, Value};
use sha2::{Digest, Sha256};

use crate::config::TableFormat;
use crate::error::{CliError, CliResult};

#[derive(Debug, Clone, PartialEq)]
pub enum Cell {
    Num(f64),
    Int(i64),
    Text(String),
    Empty,
}

impl Cell {
    fn to_field(&self) -> String {
        match self {
            Cell::Num(v) => v.to_string(),
            Cell::Int(v) => v.to_string(),
            Cell::Text(s) => s.clone(),
            Cell::Empty => String::new(),
        }
    }

    fn to_json(&self) -> Value {
        match self {
            Cell::Num(v) => json!(v),
            Cell::Int(v) => json!(v),
            Cell::Text(s) => json!(s),
            Cell::Empty => Value::Null,
        }
    }
}

impl From<f64> for Cell {
    fn from(v: f64) -> Self {
        Cell::Num(v)
    }
}

impl From<Option<f64>> for Cell {
    fn from(v: Option<f64>) -> Self {
        v.map(Cell::Num).unwrap_or(Cell::Empty)
    }
}

impl From<usize> for Cell {
    fn from(v: usize) -> Self {
        Cell::Int(v as i64)
    }
}

impl From<&str> for Cell {
    fn from(v: &str) -> Self {
        Cell::Text(v.to_string())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Table {
    pub name: String,
    pub columns: Vec<&'static str>,
    pub rows: Vec<Vec<Cell>>,
}

impl Table {
    pub fn new(name: impl Into<String>, columns: &[&'static str]) -> Self {
        Self {
            name: name.into(),
            columns: columns.to_vec(),
            rows: Vec::new(),
        }
    }

    pub fn push(&mut self, row: Vec<Cell>) {
        self.rows.push(row);
    }

    /// Every row has one cell per column and all numbers are finite.
    pub fn validate(&self) -> CliResult<()> {
        if self.columns.is_empty() {
            return Err(CliError::Schema(format!("table {} has no columns", self.name)));
        }
        for (k, row) in self.rows.iter().enumerate() {
            if row.len() != self.columns.len() {
                return Err(CliError::Schema(format!(
                    "table {} row {k}: {} cells for {} columns",
                    self.name,
                    row.len(),
                    self.columns.len()
                )));
            }
            for (c, cell) in row.iter().enumerate() {
                if let Cell::Num(v) = cell {
                    if !v.is_finite() {
                        return Err(CliError::Schema(format!(
                            "table {} row {k} column {}: non-finite value {v}",
                            self.name, self.columns[c]
                        )));
                    }
                }
            }
        }
        Ok(())
    }

    pub fn to_bytes(&self, format: TableFormat) -> CliResult<Vec<u8>> {
        self.validate()?;
        match format {
            TableFormat::Csv => {
                let mut w = csv::Writer::from_writer(Vec::new());
                let err = |e: csv::Error| CliError::Schema(format!("table {}: {e}", self.name));
                w.write_record(&self.columns).map_err(err)?;
                for row in &self.rows {
                    w.write_record(row.iter().map(Cell::to_field)).map_err(err)?;
                }
                w.into_inner().map_err(|e| CliError::Schema(format!("table {}: {e}", self.name)))
            }
            TableFormat::Json => {
                let rows: Vec<Value> = self.rows.iter().map(|r| Value::Array(r.iter().map(Cell::to_json).collect())).collect();
                let doc = json!({ "columns": self.columns, "rows": rows });
                let mut out = serde_json::to_vec_pretty(&doc).map_err(|e| CliError::Schema(e.to_string()))?;
                out.push(b'\n');
                Ok(out)
            }
        }
    }
}

/// Everything an experiment produces.
#[derive(Debug, Clone, PartialEq)]
pub struct Artifacts {
    pub tables: Vec<Table>,
    pub summary: Value,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, serde::Deserialize)]
pub struct FileDigest {
    pub file: String,
    pub bytes: u64,
    pub sha256: String,
}

pub fn sha256_hex(data: &[u8]) -> String {
    hex::encode(Sha256::digest(data))
}

/// Writes `data` to `path` through a temporary file and rename.
pub fn write_atomic(path: &Path, data: &[u8]) -> CliResult<()> {
    let tmp: PathBuf = path.with_extension("partial");
    let mut f = fs::File::create(&tmp).map_err(|e| CliError::io(&tmp, e))?;
    f.write_all(data).map_err(|e| CliError::io(&tmp, e))?;
    f.sync_all().map_err(|e| CliError::io(&tmp, e))?;
    fs::rename(&tmp, path).map_err(|e| CliError::io(path, e))
}

pub fn write_file(dir: &Path, name: &str, data: &[u8]) -> CliResult<FileDigest> {
    write_atomic(&dir.join(name), data)?;
    Ok(FileDigest {
        file: name.to_string(),
        bytes: data.len() as u64,
        sha256: sha256_hex(data),
    })
}

pub fn summary_bytes(summary: &Value) -> CliResult<Vec<u8>> {
    let mut out = serde_json::to_vec_pretty(summary).map_err(|e| CliError::Schema(e.to_string()))?;
    out.push(b'\n');
    Ok(out)
}
