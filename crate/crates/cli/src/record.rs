//! Result records and their file formats.

use std::fs;
use std::io;
use std::path::{Path, PathBuf};

use memphase::validate::CheckOutcome;
use serde::Serialize;

use crate::config::RunConfig;

/// One reported number with its uncertainty and oracle comparison.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Quantity {
    pub name: String,
    pub value: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub std_error: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub oracle: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub deviation: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub tolerance: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub passed: Option<bool>,
}

impl Quantity {
    pub fn plain(name: impl Into<String>, value: f64) -> Self {
        Self {
            name: name.into(),
            value,
            std_error: None,
            oracle: None,
            deviation: None,
            tolerance: None,
            passed: None,
        }
    }

    pub fn with_error(mut self, se: f64) -> Self {
        self.std_error = Some(se);
        self
    }

    /// Attaches an oracle value; the verdict is `deviation ≤ tolerance`.
    pub fn against(mut self, oracle: f64, deviation: f64, tolerance: f64) -> Self {
        self.oracle = Some(oracle);
        self.deviation = Some(deviation);
        self.tolerance = Some(tolerance);
        self.passed = Some(deviation.is_finite() && deviation <= tolerance);
        self
    }
}

/// A named check; `deviation` is absent when the computation failed.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CheckRow {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub criterion: Option<u8>,
    pub name: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub deviation: Option<f64>,
    pub tolerance: f64,
    pub passed: bool,
    pub detail: String,
}

impl CheckRow {
    pub fn from_outcome(criterion: Option<u8>, c: &CheckOutcome) -> Self {
        Self {
            criterion,
            name: c.name.clone(),
            deviation: c.deviation.is_finite().then_some(c.deviation),
            tolerance: c.tolerance,
            passed: c.passed,
            detail: c.detail.clone(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Provenance {
    pub program: String,
    pub version: String,
    pub root_seed: u64,
}

/// Everything a run reports. Wall-clock time goes to stderr only, so the
/// record is a pure function of the configuration.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ResultRecord {
    pub passed: bool,
    pub provenance: Provenance,
    pub config: RunConfig,
    pub quantities: Vec<Quantity>,
    pub checks: Vec<CheckRow>,
    /// Data files written next to the summary.
    pub tables: Vec<String>,
}

impl ResultRecord {
    pub fn new(config: &RunConfig) -> Self {
        Self {
            passed: true,
            provenance: Provenance {
                program: env!("CARGO_PKG_NAME").into(),
                version: env!("CARGO_PKG_VERSION").into(),
                root_seed: config.ensemble.root_seed,
            },
            config: config.clone(),
            quantities: Vec::new(),
            checks: Vec::new(),
            tables: Vec::new(),
        }
    }

    pub fn push_quantity(&mut self, q: Quantity) {
        if q.passed == Some(false) {
            self.passed = false;
        }
        self.quantities.push(q);
    }

    pub fn push_check(&mut self, c: CheckRow) {
        self.passed &= c.passed;
        self.checks.push(c);
    }

    /// Non-finite numbers cannot be recorded; they become failed checks.
    pub fn sanitize(&mut self) {
        let mut bad = Vec::new();
        for q in &mut self.quantities {
            let fields = [Some(q.value), q.std_error, q.oracle, q.deviation, q.tolerance];
            if fields.iter().flatten().any(|x| !x.is_finite()) {
                bad.push(q.name.clone());
                q.value = if q.value.is_finite() { q.value } else { 0.0 };
                q.std_error = q.std_error.filter(|x| x.is_finite());
                q.oracle = q.oracle.filter(|x| x.is_finite());
                q.deviation = q.deviation.filter(|x| x.is_finite());
                q.tolerance = q.tolerance.filter(|x| x.is_finite());
                q.passed = Some(false);
            }
        }
        for name in bad {
            self.push_check(CheckRow {
                criterion: None,
                name: format!("{name} is finite"),
                deviation: None,
                tolerance: 0.0,
                passed: false,
                detail: "non-finite value replaced by 0".into(),
            });
        }
        for c in &mut self.checks {
            if !c.tolerance.is_finite() {
                c.tolerance = 0.0;
                c.passed = false;
            }
        }
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("records contain only finite numbers and strings")
    }
}

/// A CSV table; cells are formatted with the shortest round-trip
/// representation of each number.
#[derive(Debug, Clone, PartialEq)]
pub struct Table {
    pub file_name: String,
    pub header: Vec<String>,
    pub rows: Vec<Vec<String>>,
}

impl Table {
    pub fn new(file_name: impl Into<String>, header: &[&str]) -> Self {
        Self {
            file_name: file_name.into(),
            header: header.iter().map(|s| s.to_string()).collect(),
            rows: Vec::new(),
        }
    }

    pub fn push(&mut self, row: Vec<String>) {
        debug_assert_eq!(row.len(), self.header.len());
        self.rows.push(row);
    }

    pub fn write(&self, dir: &Path) -> io::Result<PathBuf> {
        let path = dir.join(&self.file_name);
        let with_path = |e: io::Error| io::Error::new(e.kind(), format!("{}: {e}", path.display()));
        let mut w = csv::WriterBuilder::new()
            .terminator(csv::Terminator::Any(b'\n'))
            .from_path(&path)
            .map_err(|e| io::Error::other(format!("{}: {e}", path.display())))?;
        w.write_record(&self.header)
            .map_err(io::Error::other)
            .map_err(with_path)?;
        for r in &self.rows {
            w.write_record(r).map_err(io::Error::other).map_err(with_path)?;
        }
        w.flush().map_err(with_path)?;
        Ok(path)
    }
}

pub fn num(x: f64) -> String {
    if x.is_finite() {
        format!("{x}")
    } else {
        String::new()
    }
}

pub fn write_summary(record: &ResultRecord, dir: &Path, file_name: &str) -> io::Result<PathBuf> {
    let path = dir.join(file_name);
    fs::write(&path, record.to_toml()).map_err(|e| io::Error::new(e.kind(), format!("{}: {e}", path.display())))?;
    Ok(path)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_table_is_header_only() {
        let dir = tempfile::tempdir().unwrap();
        let t = Table::new("e.csv", &["theta [rad]", "gamma_G_analytic [rad]"]);
        let p = t.write(dir.path()).unwrap();
        assert_eq!(fs::read_to_string(p).unwrap(), "theta [rad],gamma_G_analytic [rad]\n");
    }

    #[test]
    fn verdicts_roll_up() {
        let mut r = ResultRecord::new(&RunConfig::default());
        r.push_quantity(Quantity::plain("a", 1.0).against(1.0, 0.0, 0.1));
        assert!(r.passed);
        r.push_quantity(Quantity::plain("b", 1.0).against(2.0, 1.0, 0.1));
        assert!(!r.passed);
    }

    #[test]
    fn non_finite_values_fail_and_serialize() {
        let mut r = ResultRecord::new(&RunConfig::default());
        r.push_quantity(Quantity::plain("x", f64::NAN));
        r.sanitize();
        assert!(!r.passed);
        let text = r.to_toml();
        assert!(text.contains("x is finite"));
    }

    #[test]
    fn numbers_round_trip() {
        let x = 0.1 + 0.2;
        assert_eq!(num(x).parse::<f64>().unwrap(), x);
        assert_eq!(num(f64::INFINITY), "");
    }
}
