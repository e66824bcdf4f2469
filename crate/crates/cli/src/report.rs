//! Report rows and their JSON / CSV serialization.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::CliError;

/// Version of the `report.json` layout.
pub const SCHEMA_VERSION: u32 = 1;

/// A computed quantity with an estimate of its numerical error.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Scalar {
    pub name: String,
    /// The identity or quantity this row belongs to.
    pub reference: String,
    pub value: f64,
    /// `None` when no error estimate applies.
    pub error_budget: Option<f64>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Comparison {
    /// Passes iff `value < tolerance`.
    #[serde(rename = "<")]
    Below,
    /// Passes iff `value > tolerance`.
    #[serde(rename = ">")]
    Above,
    /// Passes iff `value == 0` exactly.
    #[serde(rename = "==0")]
    Exact,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Check {
    pub name: String,
    pub reference: String,
    pub value: f64,
    pub tolerance: f64,
    pub comparison: Comparison,
    pub passed: bool,
}

impl Check {
    pub fn new(name: &str, reference: &str, value: f64, tolerance: f64, comparison: Comparison) -> Self {
        let passed = match comparison {
            Comparison::Below => value < tolerance,
            Comparison::Above => value > tolerance,
            Comparison::Exact => value == 0.0,
        };
        Check {
            name: name.into(),
            reference: reference.into(),
            value,
            tolerance: if comparison == Comparison::Exact {
                0.0
            } else {
                tolerance
            },
            comparison,
            passed,
        }
    }

    pub fn below(name: &str, reference: &str, value: f64, tolerance: f64) -> Self {
        Self::new(name, reference, value, tolerance, Comparison::Below)
    }

    pub fn above(name: &str, reference: &str, value: f64, tolerance: f64) -> Self {
        Self::new(name, reference, value, tolerance, Comparison::Above)
    }

    pub fn exact(name: &str, reference: &str, value: f64) -> Self {
        Self::new(name, reference, value, 0.0, Comparison::Exact)
    }

    pub fn describe(&self) -> String {
        let verdict = if self.passed { "PASS" } else { "FAIL" };
        let bound = match self.comparison {
            Comparison::Below => format!("< {:.1e}", self.tolerance),
            Comparison::Above => format!("> {:.1e}", self.tolerance),
            Comparison::Exact => "== 0".into(),
        };
        format!(
            "{}: {verdict} {:.3e} ({bound}) [{}]",
            self.name, self.value, self.reference
        )
    }
}

/// Tabular plot data written as CSV next to the report.
#[derive(Clone, Debug, PartialEq)]
pub struct Table {
    pub file: String,
    pub header: Vec<String>,
    pub rows: Vec<Vec<f64>>,
}

impl Table {
    pub fn new(file: &str, header: &[&str]) -> Self {
        Table {
            file: file.into(),
            header: header.iter().map(|h| h.to_string()).collect(),
            rows: Vec::new(),
        }
    }

    pub fn write(&self, dir: &Path) -> Result<(), CliError> {
        let mut w = csv::Writer::from_path(dir.join(&self.file))?;
        w.write_record(&self.header)?;
        for row in &self.rows {
            w.write_record(row.iter().map(|v| format!("{v:e}")))?;
        }
        w.flush()?;
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Report {
    pub schema_version: u32,
    pub name: String,
    pub seed: u64,
    pub scalars: Vec<Scalar>,
    pub checks: Vec<Check>,
    pub passed: bool,
}

impl Report {
    pub fn new(name: &str, seed: u64) -> Self {
        Report {
            schema_version: SCHEMA_VERSION,
            name: name.into(),
            seed,
            scalars: Vec::new(),
            checks: Vec::new(),
            passed: true,
        }
    }

    pub fn push_scalar(&mut self, name: &str, reference: &str, value: f64, error_budget: Option<f64>) {
        self.scalars.push(Scalar {
            name: name.into(),
            reference: reference.into(),
            value,
            error_budget,
        });
    }

    pub fn push_check(&mut self, check: Check) {
        self.passed &= check.passed;
        self.checks.push(check);
    }

    pub fn failed(&self) -> impl Iterator<Item = &Check> {
        self.checks.iter().filter(|c| !c.passed)
    }

    pub fn scalar(&self, name: &str) -> Option<f64> {
        self.scalars.iter().find(|s| s.name == name).map(|s| s.value)
    }

    pub fn check(&self, name: &str) -> Option<&Check> {
        self.checks.iter().find(|c| c.name == name)
    }

    pub fn to_json(&self) -> Result<String, CliError> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn write_json(&self, dir: &Path) -> Result<(), CliError> {
        fs::write(dir.join("report.json"), self.to_json()? + "\n")?;
        Ok(())
    }

    /// `scalars.csv` and `checks.csv`.
    pub fn write_csv(&self, dir: &Path) -> Result<(), CliError> {
        let mut w = csv::Writer::from_path(dir.join("scalars.csv"))?;
        for s in &self.scalars {
            w.serialize(s)?;
        }
        w.flush()?;
        let mut w = csv::Writer::from_path(dir.join("checks.csv"))?;
        for c in &self.checks {
            w.serialize(c)?;
        }
        w.flush()?;
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn comparisons() {
        assert!(Check::below("a", "", 1e-12, 1e-10).passed);
        assert!(!Check::below("a", "", 0.0, 0.0).passed);
        assert!(Check::above("a", "", 1.0, 0.0).passed);
        assert!(!Check::above("a", "", -1.0, 0.0).passed);
        assert!(Check::exact("a", "", 0.0).passed);
        assert!(!Check::exact("a", "", 1e-300).passed);
    }

    #[test]
    fn report_tracks_failures_and_round_trips() {
        let mut r = Report::new("t", 3);
        r.push_scalar("energy", "energy", 0.25, Some(1e-15));
        r.push_check(Check::below("ok", "", 0.0, 1.0));
        assert!(r.passed);
        r.push_check(Check::below("bad", "", 2.0, 1.0));
        assert!(!r.passed);
        assert_eq!(r.failed().map(|c| c.name.as_str()).collect::<Vec<_>>(), ["bad"]);
        let back: Report = serde_json::from_str(&r.to_json().unwrap()).unwrap();
        assert_eq!(back, r);
    }
}
