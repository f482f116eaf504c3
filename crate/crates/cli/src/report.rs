//! Run reports and their on-disk form.
//!
//! `report.json` holds everything that is a function of the configuration
//! and seed, so it is byte-identical across reruns. Wall time and the start
//! timestamp go to `timing.json`.

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use anyhow::Context;
use polytension::grid::io::FieldHeader;
use serde::Serialize;

use crate::config::ExperimentConfig;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Rule {
    /// `measured <= tolerance`
    AtMost,
    /// `measured >= tolerance`
    AtLeast,
}

/// One tolerance decision. NaN measurements fail either rule.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Decision {
    pub quantity: String,
    pub measured: f64,
    pub rule: Rule,
    pub tolerance: f64,
    pub passed: bool,
}

impl Decision {
    pub fn at_most(quantity: impl Into<String>, measured: f64, tolerance: f64) -> Self {
        Self {
            quantity: quantity.into(),
            measured,
            rule: Rule::AtMost,
            tolerance,
            passed: measured <= tolerance,
        }
    }

    pub fn at_least(quantity: impl Into<String>, measured: f64, bound: f64) -> Self {
        Self {
            quantity: quantity.into(),
            measured,
            rule: Rule::AtLeast,
            tolerance: bound,
            passed: measured >= bound,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct CheckResult {
    pub name: String,
    pub passed: bool,
    pub decisions: Vec<Decision>,
    /// Full numeric output of the check.
    pub details: serde_json::Value,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

impl CheckResult {
    pub fn new(name: impl Into<String>, decisions: Vec<Decision>, details: serde_json::Value) -> Self {
        Self {
            name: name.into(),
            passed: !decisions.is_empty() && decisions.iter().all(|d| d.passed),
            decisions,
            details,
            error: None,
        }
    }

    /// A check that could not be evaluated.
    pub fn failed(name: impl Into<String>, error: impl std::fmt::Display) -> Self {
        Self {
            name: name.into(),
            passed: false,
            decisions: Vec::new(),
            details: serde_json::Value::Null,
            error: Some(error.to_string()),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct Summary {
    pub total: usize,
    pub passed: usize,
    pub failed: usize,
    pub all_passed: bool,
}

impl Summary {
    pub fn of(checks: &[CheckResult]) -> Self {
        let passed = checks.iter().filter(|c| c.passed).count();
        Self {
            total: checks.len(),
            passed,
            failed: checks.len() - passed,
            all_passed: !checks.is_empty() && passed == checks.len(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Timing {
    /// Seconds since the Unix epoch at the start of the run.
    pub started_unix: f64,
    pub wall_seconds: f64,
}

/// A CSV table destined for `tables/<name>.csv`.
#[derive(Clone, Debug, PartialEq)]
pub struct Table {
    pub name: String,
    pub header: Vec<String>,
    pub rows: Vec<Vec<String>>,
}

impl Table {
    pub fn new(name: &str, header: &[&str]) -> Self {
        Self {
            name: name.into(),
            header: header.iter().map(|h| h.to_string()).collect(),
            rows: Vec::new(),
        }
    }

    pub fn push(&mut self, row: Vec<String>) {
        debug_assert_eq!(row.len(), self.header.len());
        self.rows.push(row);
    }
}

/// Float formatting for tables: shortest round-trip representation.
pub fn num(v: f64) -> String {
    format!("{v:e}")
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct RunReport {
    pub tool: String,
    pub version: String,
    pub config: ExperimentConfig,
    pub config_sha256: String,
    /// Hash of the sampled map at the configured resolution.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub map_sha256: Option<String>,
    /// Headers of dumped fields, keyed by field name.
    #[serde(skip_serializing_if = "BTreeMap::is_empty")]
    pub fields: BTreeMap<String, FieldHeader>,
    pub checks: Vec<CheckResult>,
    pub summary: Summary,
    #[serde(skip)]
    pub tables: Vec<Table>,
    #[serde(skip)]
    pub timing: Timing,
}

impl RunReport {
    pub fn passed(&self) -> bool {
        self.summary.all_passed
    }

    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("reports serialize");
        s.push('\n');
        s
    }

    /// Writes `report.json`, `timing.json` and, when enabled, `tables/*.csv`.
    pub fn write(&self, dir: &Path, tables: bool) -> anyhow::Result<()> {
        fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
        fs::write(dir.join("report.json"), self.to_json()).context("writing report.json")?;
        let timing = serde_json::to_string_pretty(&self.timing)? + "\n";
        fs::write(dir.join("timing.json"), timing).context("writing timing.json")?;
        if tables && !self.tables.is_empty() {
            let tdir = dir.join("tables");
            fs::create_dir_all(&tdir).with_context(|| format!("creating {}", tdir.display()))?;
            for t in &self.tables {
                let path = tdir.join(format!("{}.csv", t.name));
                let mut w = csv::Writer::from_path(&path).with_context(|| format!("writing {}", path.display()))?;
                w.write_record(&t.header)?;
                for row in &t.rows {
                    w.write_record(row)?;
                }
                w.flush()?;
            }
        }
        Ok(())
    }

    /// Human-readable summary for the terminal.
    pub fn summary_lines(&self) -> Vec<String> {
        let mut out = Vec::new();
        for c in &self.checks {
            let status = if c.passed { "PASS" } else { "FAIL" };
            let detail = match (&c.error, c.decisions.iter().find(|d| !d.passed).or(c.decisions.last())) {
                (Some(e), _) => format!("error: {e}"),
                (None, Some(d)) => {
                    let op = if d.rule == Rule::AtMost { "<=" } else { ">=" };
                    format!("{} = {:.3e} ({op} {:.1e})", d.quantity, d.measured, d.tolerance)
                }
                (None, None) => String::new(),
            };
            out.push(format!("{status} {} {detail}", c.name));
        }
        out.push(format!(
            "{} of {} checks passed in {:.2} s",
            self.summary.passed, self.summary.total, self.timing.wall_seconds
        ));
        out
    }
}
