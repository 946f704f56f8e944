//! Experiment reports and their serialisations.

use std::fmt::Write as _;
use std::io::Write;

use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::error::Result;

/// Version of the report layout.
pub const REPORT_SCHEMA: u32 = 1;

/// Outcome of one named acceptance rule.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Verdict {
    pub rule: String,
    pub passed: bool,
    pub detail: String,
}

/// Per-replicate values for optional CSV export.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct RawTable {
    pub name: String,
    pub header: Vec<String>,
    pub rows: Vec<Vec<f64>>,
}

impl RawTable {
    pub fn new(name: impl Into<String>, header: &[&str]) -> Self {
        Self { name: name.into(), header: header.iter().map(|h| h.to_string()).collect(), rows: vec![] }
    }

    pub fn write_csv<W: Write>(&self, mut out: W, manifest: &[String]) -> Result<()> {
        for line in manifest {
            writeln!(out, "# {line}")?;
        }
        let mut w = csv::Writer::from_writer(out);
        w.write_record(&self.header)?;
        for row in &self.rows {
            w.write_record(row.iter().map(|v| format!("{v:?}")))?;
        }
        w.flush()?;
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ExperimentReport {
    pub schema: u32,
    pub experiment: String,
    pub config: Value,
    pub results: Value,
    pub verdicts: Vec<Verdict>,
    #[serde(skip)]
    pub raw: Vec<RawTable>,
}

impl ExperimentReport {
    pub fn new(experiment: impl Into<String>, config: Value) -> Self {
        Self {
            schema: REPORT_SCHEMA,
            experiment: experiment.into(),
            config,
            results: Value::Null,
            verdicts: vec![],
            raw: vec![],
        }
    }

    pub fn verdict(&mut self, rule: impl Into<String>, passed: bool, detail: impl Into<String>) {
        self.verdicts.push(Verdict { rule: rule.into(), passed, detail: detail.into() });
    }

    pub fn all_passed(&self) -> bool {
        self.verdicts.iter().all(|v| v.passed)
    }

    /// Joins several reports under one name; rules are prefixed with the
    /// part they came from.
    pub fn combine(experiment: impl Into<String>, parts: Vec<ExperimentReport>) -> Self {
        let mut config = serde_json::Map::new();
        let mut results = serde_json::Map::new();
        let mut verdicts = Vec::new();
        let mut raw = Vec::new();
        for p in parts {
            config.insert(p.experiment.clone(), p.config);
            results.insert(p.experiment.clone(), p.results);
            verdicts.extend(p.verdicts.into_iter().map(|v| Verdict { rule: format!("{}/{}", p.experiment, v.rule), ..v }));
            raw.extend(p.raw);
        }
        Self {
            schema: REPORT_SCHEMA,
            experiment: experiment.into(),
            config: Value::Object(config),
            results: Value::Object(results),
            verdicts,
            raw,
        }
    }

    /// Aligned-text rendering of the verdicts.
    pub fn to_text(&self) -> String {
        let width = self.verdicts.iter().map(|v| v.rule.len()).max().unwrap_or(0);
        let mut s = format!("{}\n", self.experiment);
        for v in &self.verdicts {
            let mark = if v.passed { "PASS" } else { "FAIL" };
            let _ = writeln!(s, "  {mark}  {:width$}  {}", v.rule, v.detail);
        }
        s
    }
}
