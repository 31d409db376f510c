//! Criterion evaluation and the on-disk report bundle.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use lnoi_core::FitResult;
use serde::Serialize;
use serde_json::Value;

use crate::config::{Comparison, Resolved, Threshold};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Status {
    Pass,
    Fail,
    /// Not enough data to decide either way.
    Insufficient,
}

/// One measured quantity, as produced by a figure before thresholds are applied.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct Measurement {
    pub value: Option<f64>,
    /// Truth the figure knows from its configuration, used when the threshold
    /// does not name its own target.
    pub target: Option<f64>,
    /// Counts behind the measurement, checked against `min_counts`.
    pub counts: Option<f64>,
    pub note: Option<String>,
}

impl Measurement {
    pub fn of(value: f64) -> Self {
        Self {
            value: Some(value),
            ..Self::default()
        }
    }

    pub fn against(value: f64, target: f64) -> Self {
        Self {
            value: Some(value),
            target: Some(target),
            ..Self::default()
        }
    }

    pub fn missing(note: impl Into<String>) -> Self {
        Self {
            note: Some(note.into()),
            ..Self::default()
        }
    }

    pub fn with_counts(mut self, counts: f64) -> Self {
        self.counts = Some(counts);
        self
    }

    pub fn with_note(mut self, note: impl Into<String>) -> Self {
        self.note = Some(note.into());
        self
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct CriterionReport {
    pub name: String,
    pub comparison: Comparison,
    pub measured: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub target: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub tolerance: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub limit: Option<f64>,
    pub unit: String,
    pub status: Status,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub note: Option<String>,
}

impl CriterionReport {
    pub fn passed(&self) -> bool {
        self.status == Status::Pass
    }
}

/// Applies one threshold to one measurement.
pub fn evaluate(name: &str, t: &Threshold, m: &Measurement, params: &Value) -> Result<CriterionReport> {
    let target = match &t.target {
        Some(r) => Some(r.resolve(params)?),
        None => m.target,
    };
    let tolerance = match &t.tolerance {
        Some(r) => {
            let tol = r.resolve(params)?;
            Some(if t.relative {
                tol * target.unwrap_or(f64::NAN).abs()
            } else {
                tol
            })
        }
        None => None,
    };
    let mut note = m.note.clone();
    let status = if let (Some(min), Some(n)) = (t.min_counts, m.counts) {
        if n < min {
            note = Some(format!(
                "insufficient counts for {} {} criterion ({n:.0} < {min:.0})",
                fmt_threshold(t, tolerance),
                t.unit
            ));
            Status::Insufficient
        } else {
            compare(t, m.value, target, tolerance)
        }
    } else {
        compare(t, m.value, target, tolerance)
    };
    Ok(CriterionReport {
        name: name.to_string(),
        comparison: t.comparison,
        measured: m.value,
        target,
        tolerance,
        limit: t.limit,
        unit: t.unit.clone(),
        status,
        note,
    })
}

fn fmt_threshold(t: &Threshold, tolerance: Option<f64>) -> String {
    let v = match t.comparison {
        Comparison::Within => tolerance,
        _ => t.limit,
    };
    v.map(|x| format!("{x}")).unwrap_or_default()
}

fn compare(t: &Threshold, value: Option<f64>, target: Option<f64>, tolerance: Option<f64>) -> Status {
    let Some(v) = value.filter(|v| v.is_finite()) else {
        return Status::Fail;
    };
    let ok = match t.comparison {
        Comparison::Within => match (target, tolerance) {
            (Some(a), Some(tol)) => (v - a).abs() <= tol,
            _ => false,
        },
        Comparison::AtLeast => t.limit.is_some_and(|l| v >= l),
        Comparison::AtMost => t.limit.is_some_and(|l| v <= l),
    };
    if ok {
        Status::Pass
    } else {
        Status::Fail
    }
}

/// A data file of the bundle; `data.csv` is the figure's main series.
#[derive(Clone, Debug, PartialEq)]
pub struct DataFile {
    pub name: String,
    pub contents: String,
}

#[derive(Clone, Debug, Serialize)]
pub struct Summary {
    pub figure: String,
    pub title: String,
    pub seed: u64,
    pub status: Status,
    pub criteria: Vec<CriterionReport>,
    pub metrics: BTreeMap<String, f64>,
    pub fits: BTreeMap<String, FitResult>,
}

/// Everything one reproduction produced.
#[derive(Clone, Debug)]
pub struct ReportBundle {
    pub summary: Summary,
    pub params: Value,
    pub data: Vec<DataFile>,
}

impl ReportBundle {
    pub fn passed(&self) -> bool {
        self.summary.status == Status::Pass
    }

    pub fn criterion(&self, name: &str) -> Option<&CriterionReport> {
        self.summary.criteria.iter().find(|c| c.name == name)
    }
}

pub fn overall(criteria: &[CriterionReport]) -> Status {
    if criteria.iter().any(|c| c.status == Status::Fail) {
        Status::Fail
    } else if criteria.iter().any(|c| c.status == Status::Insufficient) {
        Status::Insufficient
    } else {
        Status::Pass
    }
}

pub fn summarize(
    r: &Resolved,
    measurements: &BTreeMap<String, Measurement>,
    metrics: BTreeMap<String, f64>,
    fits: BTreeMap<String, FitResult>,
) -> Result<Summary> {
    let mut criteria = Vec::with_capacity(r.criteria.len());
    for (name, t) in &r.criteria {
        let m = measurements
            .get(name)
            .cloned()
            .unwrap_or_else(|| Measurement::missing("figure produced no measurement"));
        criteria.push(evaluate(name, t, &m, &r.params)?);
    }
    Ok(Summary {
        figure: r.figure.to_string(),
        title: r.title.clone(),
        seed: r.seed,
        status: overall(&criteria),
        criteria,
        metrics,
        fits,
    })
}

fn pretty<T: Serialize>(v: &T) -> Result<String> {
    let mut s = serde_json::to_string_pretty(v)?;
    s.push('\n');
    Ok(s)
}

/// Writes `<out>/<figure>/{data.csv, summary.json, params.json}` plus any
/// extra data series. Returns the figure directory.
pub fn emit_reports(bundle: &ReportBundle, out: &Path) -> Result<PathBuf> {
    let dir = out.join(&bundle.summary.figure);
    fs::create_dir_all(&dir).with_context(|| format!("creating {}", dir.display()))?;
    let mut files = vec![
        ("summary.json".to_string(), pretty(&bundle.summary)?),
        ("params.json".to_string(), pretty(&bundle.params)?),
    ];
    files.extend(bundle.data.iter().map(|d| (d.name.clone(), d.contents.clone())));
    for (name, contents) in files {
        let path = dir.join(&name);
        fs::write(&path, contents).with_context(|| format!("writing {}", path.display()))?;
    }
    Ok(dir)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::config::ValueRef;
    use serde_json::json;

    fn within(tol: f64, relative: bool) -> Threshold {
        Threshold {
            comparison: Comparison::Within,
            tolerance: Some(ValueRef::Literal(tol)),
            relative,
            limit: None,
            target: None,
            unit: "V".into(),
            min_counts: None,
        }
    }

    #[test]
    fn within_uses_absolute_or_relative_tolerance() {
        let p = json!({});
        let r = evaluate("x", &within(0.4, false), &Measurement::against(17.5, 17.8), &p).unwrap();
        assert_eq!(r.status, Status::Pass);
        let r = evaluate("x", &within(0.01, true), &Measurement::against(17.5, 17.8), &p).unwrap();
        assert_eq!(r.status, Status::Fail);
        assert!((r.tolerance.unwrap() - 0.178).abs() < 1e-12);
    }

    #[test]
    fn missing_values_fail_and_low_counts_are_insufficient() {
        let p = json!({});
        let r = evaluate("x", &within(1.0, false), &Measurement::missing("fit failed"), &p).unwrap();
        assert_eq!(r.status, Status::Fail);
        assert_eq!(r.note.as_deref(), Some("fit failed"));

        let mut t = within(1.0, false);
        t.min_counts = Some(1e6);
        let m = Measurement::against(0.0, 0.0).with_counts(10.0);
        let r = evaluate("x", &t, &m, &p).unwrap();
        assert_eq!(r.status, Status::Insufficient);
        assert!(r.note.unwrap().starts_with("insufficient counts for 1 V criterion"));
    }

    #[test]
    fn limits() {
        let p = json!({});
        let mut t = within(0.0, false);
        t.comparison = Comparison::AtLeast;
        t.limit = Some(30.0);
        assert_eq!(
            evaluate("x", &t, &Measurement::of(31.0), &p).unwrap().status,
            Status::Pass
        );
        t.comparison = Comparison::AtMost;
        assert_eq!(
            evaluate("x", &t, &Measurement::of(31.0), &p).unwrap().status,
            Status::Fail
        );
        assert_eq!(
            evaluate("x", &t, &Measurement::of(f64::NAN), &p).unwrap().status,
            Status::Fail
        );
    }

    #[test]
    fn overall_status_prefers_fail() {
        let mk = |s| CriterionReport {
            name: String::new(),
            comparison: Comparison::AtMost,
            measured: None,
            target: None,
            tolerance: None,
            limit: None,
            unit: String::new(),
            status: s,
            note: None,
        };
        assert_eq!(
            overall(&[mk(Status::Pass), mk(Status::Insufficient)]),
            Status::Insufficient
        );
        assert_eq!(overall(&[mk(Status::Insufficient), mk(Status::Fail)]), Status::Fail);
        assert_eq!(overall(&[]), Status::Pass);
    }
}
