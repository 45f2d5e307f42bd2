//! Structured run reports and plot-data tables.
//!
//! Reports are JSON objects with lexicographically sorted keys; every number
//! is stored as `{ "value": ..., "unit": ... }`. Tables are tab separated
//! with a unit-bearing header line.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::limits::{LimitResult, ScanPoint};

/// Unit string used for pure numbers.
pub const DIMENSIONLESS: &str = "1";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Quantity {
    pub value: f64,
    pub unit: String,
}

impl Quantity {
    pub fn new(value: f64, unit: impl Into<String>) -> Self {
        Self {
            value,
            unit: unit.into(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct Report {
    pub command: String,
    pub kind: Option<String>,
    pub config_hash: String,
    pub seed: u64,
    pub method: Option<String>,
    pub quantities: BTreeMap<String, Quantity>,
    /// Human-readable summary lines.
    pub rows: Vec<String>,
    /// Modelling assumptions the numbers depend on.
    pub assumptions: Vec<String>,
    /// Files written next to the report.
    pub artifacts: Vec<String>,
}

impl Report {
    pub fn new(command: impl Into<String>, config_hash: impl Into<String>, seed: u64) -> Self {
        Self {
            command: command.into(),
            config_hash: config_hash.into(),
            seed,
            ..Self::default()
        }
    }

    pub fn set(&mut self, key: impl Into<String>, value: f64, unit: impl Into<String>) -> &mut Self {
        self.quantities.insert(key.into(), Quantity::new(value, unit));
        self
    }

    pub fn get(&self, key: &str) -> Option<f64> {
        self.quantities.get(key).map(|q| q.value)
    }

    /// Records bound, best fit and confidence level of a limit under `prefix`.
    pub fn add_limit(&mut self, prefix: &str, limit: &LimitResult) {
        self.set(format!("{prefix}.upper_bound"), limit.upper_bound, &limit.unit);
        self.set(format!("{prefix}.best_fit"), limit.best_fit, &limit.unit);
        self.set(format!("{prefix}.confidence_level"), limit.confidence_level, DIMENSIONLESS);
        if self.method.is_none() {
            self.method = Some(limit.method.clone());
        }
    }

    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("report serializes to JSON");
        s.push('\n');
        s
    }

    pub fn from_json(text: &str) -> serde_json::Result<Self> {
        serde_json::from_str(text)
    }
}

/// A tab-separated table with one header line naming columns and units.
#[derive(Debug, Clone, PartialEq)]
pub struct Table {
    pub columns: Vec<String>,
    pub rows: Vec<Vec<f64>>,
}

impl Table {
    pub fn new(columns: &[&str]) -> Self {
        Self {
            columns: columns.iter().map(|c| c.to_string()).collect(),
            rows: Vec::new(),
        }
    }

    pub fn push(&mut self, row: Vec<f64>) {
        debug_assert_eq!(row.len(), self.columns.len());
        self.rows.push(row);
    }

    pub fn to_tsv(&self, config_hash: &str) -> String {
        let mut out = format!("# config_hash: {config_hash}\n{}\n", self.columns.join("\t"));
        for row in &self.rows {
            let cells: Vec<String> = row.iter().map(|&v| format_number(v)).collect();
            let _ = writeln!(out, "{}", cells.join("\t"));
        }
        out
    }
}

/// Shortest round-trip representation; exponent form outside [1e-4, 1e15).
pub fn format_number(v: f64) -> String {
    let a = v.abs();
    if a == 0.0 || (1e-4..1e15).contains(&a) || !a.is_finite() {
        v.to_string()
    } else {
        format!("{v:e}")
    }
}

pub fn scan_table(limit: &LimitResult) -> Table {
    let stat = if limit.method.ends_with("poisson_nll") {
        "poisson_nll[1]"
    } else {
        "chi2[1]"
    };
    let first = format!("{}[{}]", limit.parameter, limit.unit);
    let mut t = Table::new(&[first.as_str(), stat]);
    for ScanPoint { value, statistic } in &limit.scan {
        t.push(vec![*value, *statistic]);
    }
    t
}
