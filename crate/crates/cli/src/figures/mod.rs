//! One runner per reproduced figure.

mod detector;
mod loss;
mod modulation;
mod switching;

use std::collections::BTreeMap;
use std::fmt;
use std::path::PathBuf;
use std::str::FromStr;

use anyhow::{anyhow, bail, Context, Result};
use lnoi_core::{FitResult, Histogram, Scenario};
use serde::de::DeserializeOwned;
use serde_json::Value;

use crate::config::{self, get_path, Override};
use crate::report::{summarize, DataFile, Measurement, ReportBundle};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum FigureId {
    Fig2a,
    Fig2b,
    Fig2c,
    Fig3ab,
    Fig3cd,
    Fig3ef,
    Fig4ab,
    Fig4c,
    Fig4d,
    Fig5a,
    Fig5bc,
}

impl FigureId {
    pub const ALL: [FigureId; 11] = [
        Self::Fig2a,
        Self::Fig2b,
        Self::Fig2c,
        Self::Fig3ab,
        Self::Fig3cd,
        Self::Fig3ef,
        Self::Fig4ab,
        Self::Fig4c,
        Self::Fig4d,
        Self::Fig5a,
        Self::Fig5bc,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Self::Fig2a => "fig2a",
            Self::Fig2b => "fig2b",
            Self::Fig2c => "fig2c",
            Self::Fig3ab => "fig3ab",
            Self::Fig3cd => "fig3cd",
            Self::Fig3ef => "fig3ef",
            Self::Fig4ab => "fig4ab",
            Self::Fig4c => "fig4c",
            Self::Fig4d => "fig4d",
            Self::Fig5a => "fig5a",
            Self::Fig5bc => "fig5bc",
        }
    }

    /// Parameter keys that hold a complete scenario document.
    pub fn scenario_keys(self) -> &'static [&'static str] {
        match self {
            Self::Fig3ab | Self::Fig3cd | Self::Fig3ef | Self::Fig4ab | Self::Fig4c | Self::Fig5bc => &["scenario"],
            Self::Fig4d => &["scenario", "rt_scenario"],
            Self::Fig2a | Self::Fig2b | Self::Fig2c | Self::Fig5a => &[],
        }
    }

    /// Adjusts resolved parameters that depend on each other.
    pub(crate) fn normalize(self, params: &mut Value) -> Result<()> {
        if self == Self::Fig4d {
            // a shortened run keeps one bin instead of becoming invalid
            for key in self.scenario_keys() {
                let s = &mut params[*key];
                let duration = s["duration_s"]
                    .as_f64()
                    .ok_or_else(|| anyhow!("{key}.duration_s must be a number"))?;
                if let Some(w) = s.pointer_mut("/mode/bin_width_s") {
                    if w.as_f64().is_some_and(|w| w > duration) {
                        *w = Value::from(duration);
                    }
                }
            }
        }
        Ok(())
    }
}

impl fmt::Display for FigureId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for FigureId {
    type Err = anyhow::Error;

    fn from_str(s: &str) -> Result<Self> {
        Self::ALL.into_iter().find(|f| f.as_str() == s).ok_or_else(|| {
            let known: Vec<_> = Self::ALL.iter().map(|f| f.as_str()).collect();
            anyhow!("unknown figure id `{s}` (known: {})", known.join(", "))
        })
    }
}

/// What to reproduce and where to put it.
#[derive(Clone, Debug, PartialEq)]
pub struct ReproductionSpec {
    pub figure: FigureId,
    /// Falls back to the figure's default seed, never to the clock.
    pub seed: Option<u64>,
    pub overrides: Vec<Override>,
    pub out_dir: PathBuf,
}

impl ReproductionSpec {
    pub fn new(figure: FigureId) -> Self {
        Self {
            figure,
            seed: None,
            overrides: Vec::new(),
            out_dir: PathBuf::from("out"),
        }
    }
}

/// Raw results of a figure before thresholds are applied.
#[derive(Default)]
pub(crate) struct Outcome {
    pub measurements: BTreeMap<String, Measurement>,
    pub metrics: BTreeMap<String, f64>,
    pub fits: BTreeMap<String, FitResult>,
    pub data: Vec<DataFile>,
}

impl Outcome {
    fn measure(&mut self, name: &str, m: Measurement) {
        self.measurements.insert(name.to_string(), m);
    }

    fn metric(&mut self, name: &str, v: f64) {
        self.metrics.insert(name.to_string(), v);
    }

    fn fit(&mut self, name: &str, f: FitResult) {
        self.fits.insert(name.to_string(), f);
    }

    fn data(&mut self, name: &str, contents: String) {
        self.data.push(DataFile {
            name: name.to_string(),
            contents,
        });
    }
}

/// Runs the figure with its resolved parameters and evaluates the criteria. Nothing
/// is written to disk; see [`crate::emit_reports`].
pub fn run_reproduction(spec: &ReproductionSpec) -> Result<ReportBundle> {
    let r = config::resolve(spec.figure, spec.seed, &spec.overrides)?;
    let p = Params(&r.params);
    let outcome = match spec.figure {
        FigureId::Fig2a | FigureId::Fig2b => loss::resonance(&p),
        FigureId::Fig2c => loss::insertion_loss(&p),
        FigureId::Fig3ab => detector::efficiency(&p),
        FigureId::Fig3cd => detector::decay(&p),
        FigureId::Fig3ef => detector::jitter(&p),
        FigureId::Fig4ab => switching::vpi(&p),
        FigureId::Fig4c => switching::extinction(&p),
        FigureId::Fig4d => switching::stability(&p),
        FigureId::Fig5a => modulation::bandwidth(&p),
        FigureId::Fig5bc => modulation::visibility(&p),
    }
    .with_context(|| format!("running {}", spec.figure))?;
    if !outcome.data.first().is_some_and(|d| d.name == "data.csv") {
        bail!("{} produced no data.csv", spec.figure);
    }
    let summary = summarize(&r, &outcome.measurements, outcome.metrics, outcome.fits)?;
    Ok(ReportBundle {
        summary,
        params: r.params,
        data: outcome.data,
    })
}

/// Typed access to the resolved parameters.
pub(crate) struct Params<'a>(&'a Value);

impl Params<'_> {
    fn value(&self, path: &str) -> Result<&Value> {
        get_path(self.0, path).ok_or_else(|| anyhow!("missing parameter `{path}`"))
    }

    fn get<T: DeserializeOwned>(&self, path: &str) -> Result<T> {
        serde_json::from_value(self.value(path)?.clone()).with_context(|| format!("parameter `{path}`"))
    }

    fn f64(&self, path: &str) -> Result<f64> {
        self.value(path)?
            .as_f64()
            .ok_or_else(|| anyhow!("parameter `{path}` must be a number"))
    }

    fn u64(&self, path: &str) -> Result<u64> {
        let v = self.f64(path)?;
        if !(v >= 1.0 && v.fract() == 0.0) {
            bail!("parameter `{path}` must be a positive integer, got {v}");
        }
        Ok(v as u64)
    }

    fn seed(&self) -> Result<u64> {
        self.get("seed")
    }

    fn scenario(&self, key: &str) -> Result<Scenario> {
        let s: Scenario = self.get(key)?;
        s.validate().with_context(|| format!("invalid `{key}`"))?;
        Ok(s)
    }
}

fn csv_table<const N: usize>(header: [&str; N], rows: impl IntoIterator<Item = [String; N]>) -> Result<String> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(header)?;
    for r in rows {
        w.write_record(&r)?;
    }
    Ok(String::from_utf8(w.into_inner().map_err(|e| anyhow!("{e}"))?)?)
}

fn histogram_csv(h: &Histogram) -> String {
    h.to_csv()
}

/// `{:?}` keeps full precision and round-trips through the CSV reader.
fn num(v: f64) -> String {
    format!("{v:?}")
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn figure_ids_round_trip() {
        for f in FigureId::ALL {
            assert_eq!(f.as_str().parse::<FigureId>().unwrap(), f);
        }
        let e = "fig9z".parse::<FigureId>().unwrap_err().to_string();
        assert!(e.contains("unknown figure id `fig9z`"), "{e}");
    }

    #[test]
    fn shortened_stability_run_keeps_one_bin() {
        let r = config::resolve(FigureId::Fig4d, None, &["scenario.duration_s=1".parse().unwrap()]).unwrap();
        assert_eq!(r.params["scenario"]["mode"]["bin_width_s"], serde_json::json!(1.0));
    }
}
