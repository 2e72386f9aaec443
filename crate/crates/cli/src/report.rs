//! report.json and the CSV tables next to it.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use anyhow::Context;
use serde::Serialize;

use crate::config::ExperimentConfig;

pub const REPORT_SCHEMA: &str = "paulispec-report";
pub const REPORT_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Check {
    pub name: String,
    pub pass: bool,
    pub value: f64,
    /// Threshold the value was compared with, when there is one.
    pub limit: Option<f64>,
    pub detail: String,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Report {
    pub schema: &'static str,
    pub schema_version: u32,
    pub kind: &'static str,
    pub config: ExperimentConfig,
    pub pass: bool,
    pub checks: Vec<Check>,
    /// Scalar results compared by the convergence probe.
    pub headline: BTreeMap<String, f64>,
    /// Files written next to the report.
    pub artifacts: Vec<String>,
    /// Kind-specific detail.
    pub details: serde_json::Value,
}

impl Report {
    pub fn new(config: &ExperimentConfig) -> Self {
        Self {
            schema: REPORT_SCHEMA,
            schema_version: REPORT_VERSION,
            kind: config.kind.name(),
            config: config.clone(),
            pass: true,
            checks: Vec::new(),
            headline: BTreeMap::new(),
            artifacts: Vec::new(),
            details: serde_json::Value::Null,
        }
    }

    /// Passes when value ≤ limit.
    pub fn at_most(&mut self, name: &str, value: f64, limit: f64, detail: impl Into<String>) {
        self.push(name, value <= limit, value, Some(limit), detail);
    }

    /// Passes when value ≥ limit.
    pub fn at_least(&mut self, name: &str, value: f64, limit: f64, detail: impl Into<String>) {
        self.push(name, value >= limit, value, Some(limit), detail);
    }

    pub fn holds(&mut self, name: &str, pass: bool, detail: impl Into<String>) {
        self.push(name, pass, if pass { 1.0 } else { 0.0 }, None, detail);
    }

    fn push(&mut self, name: &str, pass: bool, value: f64, limit: Option<f64>, detail: impl Into<String>) {
        self.pass &= pass;
        self.checks.push(Check { name: name.into(), pass, value, limit, detail: detail.into() });
    }

    pub fn headline(&mut self, key: impl Into<String>, value: f64) {
        self.headline.insert(key.into(), value);
    }

    pub fn to_json(&self) -> String {
        // NaN has no JSON form; serde_json writes it as null.
        serde_json::to_string_pretty(self).expect("report serializes") + "\n"
    }
}

/// Output directory with the list of files written into it.
pub struct Sink {
    pub dir: PathBuf,
    pub written: Vec<String>,
}

impl Sink {
    pub fn new(dir: &Path) -> anyhow::Result<Self> {
        fs::create_dir_all(dir).with_context(|| format!("creating output directory {}", dir.display()))?;
        Ok(Self { dir: dir.to_path_buf(), written: Vec::new() })
    }

    /// Table with an explicit header, so empty tables still name their columns.
    pub fn csv<R: Serialize>(&mut self, name: &str, header: &[&str], rows: &[R]) -> anyhow::Result<()> {
        let path = self.dir.join(name);
        let mut w = csv::WriterBuilder::new()
            .has_headers(false)
            .from_path(&path)
            .with_context(|| format!("writing {}", path.display()))?;
        w.write_record(header)?;
        for r in rows {
            w.serialize(r)?;
        }
        w.flush()?;
        self.written.push(name.into());
        Ok(())
    }

    pub fn text(&mut self, name: &str, contents: &str) -> anyhow::Result<()> {
        let path = self.dir.join(name);
        fs::write(&path, contents).with_context(|| format!("writing {}", path.display()))?;
        self.written.push(name.into());
        Ok(())
    }

    pub fn finish(mut self, mut report: Report) -> anyhow::Result<Report> {
        self.written.sort();
        report.artifacts = self.written.clone();
        self.text("report.json", &report.to_json())?;
        Ok(report)
    }
}
