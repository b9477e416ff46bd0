//! Check records and report files.

use std::fs;
use std::path::Path;

use serde::Serialize;
use serde_json::{json, Map, Value};

use crate::cli::config::ExperimentConfig;
use crate::error::Result;

/// One thresholded quantity.
#[derive(Clone, Debug, Serialize)]
pub struct Check {
    pub name: String,
    pub value: f64,
    pub tol: f64,
    pub pass: bool,
}

impl Check {
    /// Passes when `value <= tol`; NaN fails.
    pub fn at_most(name: impl Into<String>, value: f64, tol: f64) -> Self {
        Check { name: name.into(), value, tol, pass: value <= tol }
    }
}

/// A CSV table with a header row.
#[derive(Clone, Debug)]
pub struct Table {
    pub file: String,
    pub header: Vec<String>,
    pub rows: Vec<Vec<String>>,
}

impl Table {
    pub fn new(file: &str, header: &[&str]) -> Self {
        Table { file: file.into(), header: header.iter().map(|s| s.to_string()).collect(), rows: Vec::new() }
    }

    pub fn push(&mut self, row: Vec<String>) {
        self.rows.push(row);
    }

    fn write(&self, dir: &Path) -> Result<()> {
        let mut w = csv::Writer::from_path(dir.join(&self.file))?;
        w.write_record(&self.header)?;
        for r in &self.rows {
            w.write_record(r)?;
        }
        w.flush()?;
        Ok(())
    }
}

/// Result of one command before it is written out.
#[derive(Debug)]
pub struct Outcome {
    pub command: &'static str,
    pub checks: Vec<Check>,
    pub data: Map<String, Value>,
    pub tables: Vec<Table>,
}

impl Outcome {
    pub fn new(command: &'static str) -> Self {
        Outcome { command, checks: Vec::new(), data: Map::new(), tables: Vec::new() }
    }

    pub fn check(&mut self, c: Check) {
        self.checks.push(c);
    }

    pub fn put(&mut self, key: &str, v: impl Serialize) {
        self.data.insert(key.into(), serde_json::to_value(v).unwrap_or(Value::Null));
    }

    pub fn passed(&self) -> bool {
        self.checks.iter().all(|c| c.pass)
    }

    /// The JSON report: command data plus checks, config, its hash and the
    /// crate version. Keys come out sorted.
    pub fn report(&self, cfg: &ExperimentConfig) -> Value {
        let mut m = self.data.clone();
        m.insert("command".into(), json!(self.command));
        m.insert("version".into(), json!(env!("CARGO_PKG_VERSION")));
        m.insert("config_hash".into(), json!(cfg.hash()));
        m.insert("config".into(), serde_json::to_value(cfg).unwrap_or(Value::Null));
        m.insert("checks".into(), serde_json::to_value(&self.checks).unwrap_or(Value::Null));
        m.insert("passed".into(), json!(self.passed()));
        Value::Object(m)
    }

    /// Writes `<command>.json` and the tables into the output directory.
    pub fn write(&self, cfg: &ExperimentConfig) -> Result<()> {
        fs::create_dir_all(&cfg.out)?;
        let text = serde_json::to_string_pretty(&self.report(cfg))?;
        fs::write(cfg.out.join(format!("{}.json", self.command)), text + "\n")?;
        for t in &self.tables {
            t.write(&cfg.out)?;
        }
        Ok(())
    }
}

pub fn num(v: f64) -> String {
    format!("{v:e}")
}
