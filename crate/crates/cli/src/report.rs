//! Versioned run reports and baseline comparison.

use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::config::ExperimentConfig;
use crate::error::CliError;

pub const SCHEMA_VERSION: u32 = 1;

/// Default relative tolerance of scalar comparisons, scaled by max(1, |baseline|).
pub const DEFAULT_SCALAR_TOL: f64 = 1e-9;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Check {
    pub name: String,
    pub passed: bool,
    pub value: f64,
    pub threshold: f64,
    /// Signed distance from the threshold; nonnegative when passed.
    pub margin: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub note: Option<String>,
}

impl Check {
    /// Passes when value ≥ threshold.
    pub fn at_least(name: impl Into<String>, value: f64, threshold: f64) -> Self {
        Check {
            name: name.into(),
            passed: value >= threshold,
            value,
            threshold,
            margin: value - threshold,
            note: None,
        }
    }

    /// Passes when value ≤ threshold.
    pub fn at_most(name: impl Into<String>, value: f64, threshold: f64) -> Self {
        Check {
            name: name.into(),
            passed: value <= threshold,
            value,
            threshold,
            margin: threshold - value,
            note: None,
        }
    }

    pub fn flag(name: impl Into<String>, passed: bool) -> Self {
        Check {
            name: name.into(),
            passed,
            value: if passed { 1.0 } else { 0.0 },
            threshold: 1.0,
            margin: if passed { 0.0 } else { -1.0 },
            note: None,
        }
    }

    pub fn with_note(mut self, note: impl Into<String>) -> Self {
        self.note = Some(note.into());
        self
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunReport {
    pub schema_version: u32,
    pub kind: String,
    pub config: ExperimentConfig,
    pub checks: Vec<Check>,
    pub scalars: BTreeMap<String, f64>,
    pub artifacts: Vec<String>,
    pub notes: Vec<String>,
    pub wall_clock_s: f64,
}

impl RunReport {
    pub fn new(kind: &str, config: ExperimentConfig) -> Self {
        RunReport {
            schema_version: SCHEMA_VERSION,
            kind: kind.to_string(),
            config,
            checks: Vec::new(),
            scalars: BTreeMap::new(),
            artifacts: Vec::new(),
            notes: Vec::new(),
            wall_clock_s: 0.0,
        }
    }

    pub fn passed(&self) -> bool {
        self.checks.iter().all(|c| c.passed)
    }

    pub fn failing(&self) -> Vec<&str> {
        self.checks
            .iter()
            .filter(|c| !c.passed)
            .map(|c| c.name.as_str())
            .collect()
    }

    pub fn check(&self, name: &str) -> Option<&Check> {
        self.checks.iter().find(|c| c.name == name)
    }

    pub fn scalar(&self, name: &str) -> Option<f64> {
        self.scalars.get(name).copied()
    }

    pub fn push(&mut self, check: Check) {
        self.checks.push(check);
    }

    pub fn set(&mut self, key: &str, value: f64) {
        self.scalars.insert(key.to_string(), value);
    }

    pub fn save(&self, path: &Path) -> Result<(), CliError> {
        std::fs::write(path, serde_json::to_string_pretty(self)?)?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path)?;
        let raw: serde_json::Value = serde_json::from_str(&text)?;
        let found = raw
            .get("schema_version")
            .and_then(|v| v.as_u64())
            .unwrap_or(0) as u32;
        if found != SCHEMA_VERSION {
            return Err(CliError::Schema {
                found,
                expected: SCHEMA_VERSION,
            });
        }
        Ok(serde_json::from_value(raw)?)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Difference {
    pub key: String,
    pub report: Option<f64>,
    pub baseline: Option<f64>,
    pub tolerance: f64,
}

/// Per-key tolerances; keys not listed use [`DEFAULT_SCALAR_TOL`].
pub fn scalar_tolerance(key: &str) -> f64 {
    match key {
        "wall_clock_s" => f64::INFINITY,
        k if k.starts_with("time_") => f64::INFINITY,
        _ => DEFAULT_SCALAR_TOL,
    }
}

/// Scalar-by-scalar and check-by-check differences; empty when the reports agree.
pub fn compare_baseline(
    report: &RunReport,
    baseline: &RunReport,
) -> Result<Vec<Difference>, CliError> {
    if report.schema_version != baseline.schema_version {
        return Err(CliError::Schema {
            found: report.schema_version,
            expected: baseline.schema_version,
        });
    }
    let mut out = Vec::new();
    let keys: std::collections::BTreeSet<&String> = report
        .scalars
        .keys()
        .chain(baseline.scalars.keys())
        .collect();
    for key in keys {
        let tol = scalar_tolerance(key);
        let (a, b) = (
            report.scalars.get(key).copied(),
            baseline.scalars.get(key).copied(),
        );
        let differs = match (a, b) {
            (Some(x), Some(y)) if x.is_nan() && y.is_nan() => false,
            (Some(x), Some(y)) if x.is_infinite() || y.is_infinite() => x != y,
            (Some(x), Some(y)) => !((x - y).abs() <= tol * y.abs().max(1.0)),
            _ => true,
        };
        if differs {
            out.push(Difference {
                key: key.clone(),
                report: a,
                baseline: b,
                tolerance: tol,
            });
        }
    }
    let flags = |r: &RunReport| -> BTreeMap<String, bool> {
        r.checks
            .iter()
            .map(|c| (c.name.clone(), c.passed))
            .collect()
    };
    let (fa, fb) = (flags(report), flags(baseline));
    let names: std::collections::BTreeSet<&String> = fa.keys().chain(fb.keys()).collect();
    for name in names {
        let (a, b) = (fa.get(name), fb.get(name));
        if a != b {
            let as_num = |v: Option<&bool>| v.map(|p| if *p { 1.0 } else { 0.0 });
            out.push(Difference {
                key: format!("check:{name}"),
                report: as_num(a),
                baseline: as_num(b),
                tolerance: 0.0,
            });
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample() -> RunReport {
        let mut r = RunReport::new("lambda1", ExperimentConfig::preset("sphere").unwrap());
        r.set("lambda1", 2.0);
        r.set("wall_clock_s", 0.3);
        r.push(Check::at_least("fiber_mode_gap", 1.0, 0.0));
        r
    }

    #[test]
    fn identical_reports_agree() {
        assert!(compare_baseline(&sample(), &sample()).unwrap().is_empty());
    }

    #[test]
    fn tolerance_on_lambda() {
        let base = sample();
        let mut near = sample();
        near.set("lambda1", 2.0 + 1e-12);
        near.set("wall_clock_s", 9.0);
        assert!(compare_baseline(&near, &base).unwrap().is_empty());
        let mut far = sample();
        far.set("lambda1", 2.0 + 1e-3);
        let d = compare_baseline(&far, &base).unwrap();
        assert_eq!(d.len(), 1);
        assert_eq!(d[0].key, "lambda1");
    }

    #[test]
    fn check_flip_and_schema() {
        let base = sample();
        let mut other = sample();
        other.checks[0].passed = false;
        assert_eq!(
            compare_baseline(&other, &base).unwrap()[0].key,
            "check:fiber_mode_gap"
        );
        other.schema_version = 99;
        assert!(matches!(
            compare_baseline(&other, &base),
            Err(CliError::Schema { .. })
        ));
    }
}
