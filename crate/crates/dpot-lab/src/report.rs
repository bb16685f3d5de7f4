//! Report structure and JSON / CSV-bundle emission.

use crate::config::OutputFormat;
use serde::{Deserialize, Serialize};
use serde_json::{Map, Value};
use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum EmitError {
    #[error("i/o error on {path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),
    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
}

/// JSON number, with non-finite values as the strings "inf", "-inf", "nan".
pub fn num(x: f64) -> Value {
    if x.is_finite() {
        Value::from(x)
    } else if x.is_nan() {
        Value::from("nan")
    } else if x > 0.0 {
        Value::from("inf")
    } else {
        Value::from("-inf")
    }
}

pub fn nums(v: &[f64]) -> Value {
    Value::Array(v.iter().map(|&x| num(x)).collect())
}

/// Reads back a value written by [`num`].
pub fn as_f64(v: &Value) -> Option<f64> {
    match v {
        Value::Number(n) => n.as_f64(),
        Value::String(s) => match s.as_str() {
            "inf" => Some(f64::INFINITY),
            "-inf" => Some(f64::NEG_INFINITY),
            "nan" => Some(f64::NAN),
            _ => None,
        },
        _ => None,
    }
}

/// A CSV-exportable trace.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
pub struct Table {
    pub name: String,
    pub headers: Vec<String>,
    pub rows: Vec<Vec<Value>>,
}

impl Table {
    pub fn new(name: &str, headers: &[&str]) -> Self {
        Self { name: name.into(), headers: headers.iter().map(|h| h.to_string()).collect(), rows: Vec::new() }
    }

    pub fn push(&mut self, row: Vec<Value>) {
        debug_assert_eq!(row.len(), self.headers.len());
        self.rows.push(row);
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AssertionOutcome {
    pub operation: String,
    pub metric: String,
    pub comparison: String,
    pub expected: Value,
    pub actual: Option<Value>,
    pub tolerance: f64,
    pub passed: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StageError {
    pub stage: String,
    pub message: String,
    pub resource_limit: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
pub struct Timing {
    pub unix_seconds: u64,
    pub runtimes_ms: BTreeMap<String, u64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
pub struct Provenance {
    pub package: String,
    pub version: String,
    pub seed: Option<u64>,
    /// Wall-clock data; the only part of a report that varies between runs.
    pub timestamp: Timing,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
pub struct Report {
    pub config: BTreeMap<String, String>,
    pub results: Map<String, Value>,
    pub metrics: BTreeMap<String, Value>,
    pub tables: Vec<Table>,
    pub assertions: Vec<AssertionOutcome>,
    pub errors: Vec<StageError>,
    pub provenance: Provenance,
}

impl Report {
    pub fn all_passed(&self) -> bool {
        self.assertions.iter().all(|a| a.passed)
    }

    /// 0 success, 2 assertion failure, 4 resource limit.
    pub fn exit_code(&self) -> i32 {
        if self.errors.iter().any(|e| e.resource_limit) {
            4
        } else if !self.all_passed() {
            2
        } else {
            0
        }
    }

    /// Canonical JSON text.
    pub fn to_json(&self) -> Result<String, serde_json::Error> {
        let mut s = serde_json::to_string_pretty(&serde_json::to_value(self)?)?;
        s.push('\n');
        Ok(s)
    }

    /// JSON with the timestamp block cleared, for determinism comparisons.
    pub fn to_json_without_timestamp(&self) -> Result<String, serde_json::Error> {
        let mut r = self.clone();
        r.provenance.timestamp = Timing::default();
        r.to_json()
    }
}

fn write(path: &Path, text: &str) -> Result<(), EmitError> {
    std::fs::write(path, text).map_err(|source| EmitError::Io { path: path.into(), source })
}

fn cell(v: &Value) -> String {
    match v {
        Value::String(s) => s.clone(),
        Value::Null => String::new(),
        other => other.to_string(),
    }
}

/// Writes `report.json`, or one CSV per table plus `report.json` for the
/// csv-bundle format. Returns the files written.
pub fn emit_report(report: &Report, format: OutputFormat, dir: &Path) -> Result<Vec<PathBuf>, EmitError> {
    std::fs::create_dir_all(dir).map_err(|source| EmitError::Io { path: dir.into(), source })?;
    let mut written = Vec::new();
    let json_path = dir.join("report.json");
    write(&json_path, &report.to_json()?)?;
    written.push(json_path);
    if format == OutputFormat::CsvBundle {
        for t in &report.tables {
            let path = dir.join(format!("{}.csv", t.name));
            let mut w = csv::Writer::from_path(&path)?;
            w.write_record(&t.headers)?;
            for row in &t.rows {
                w.write_record(row.iter().map(cell))?;
            }
            w.flush().map_err(|source| EmitError::Io { path: path.clone(), source })?;
            written.push(path);
        }
    }
    Ok(written)
}
