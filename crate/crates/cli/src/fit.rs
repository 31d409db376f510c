//! `bench fit`: fits a model to a CSV file and reports the result.

use std::fmt;
use std::fs::File;
use std::io::BufReader;
use std::path::Path;
use std::str::FromStr;

use anyhow::{anyhow, bail, Context, Result};
use lnoi_core::analysis::{
    fit_envelope_sinusoid_spectrum, fit_gaussian_peak, fit_lorentzian_resonance, fit_vpi_samples, modulation_visibility,
};
use lnoi_core::{FitResult, Histogram};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum FitModel {
    /// `wavelength_nm,transmission`
    Lorentzian,
    /// Start-stop histogram in `bin_start_ps,count` form.
    GaussianPeak,
    /// `volts,counts` from a ramp.
    Vpi,
    /// Histogram spanning exactly one drive period.
    Visibility,
    /// `wavelength_nm,reference,device`
    EnvelopeSinusoid,
}

impl FitModel {
    pub const ALL: [FitModel; 5] = [
        Self::Lorentzian,
        Self::GaussianPeak,
        Self::Vpi,
        Self::Visibility,
        Self::EnvelopeSinusoid,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Self::Lorentzian => "lorentzian",
            Self::GaussianPeak => "gaussian-peak",
            Self::Vpi => "vpi",
            Self::Visibility => "visibility",
            Self::EnvelopeSinusoid => "envelope-sinusoid",
        }
    }
}

impl fmt::Display for FitModel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for FitModel {
    type Err = anyhow::Error;

    fn from_str(s: &str) -> Result<Self> {
        Self::ALL.into_iter().find(|m| m.as_str() == s).ok_or_else(|| {
            let known: Vec<_> = Self::ALL.iter().map(|m| m.as_str()).collect();
            anyhow!("unknown model `{s}` (known: {})", known.join(", "))
        })
    }
}

/// Numeric columns of a CSV file with a header row.
fn read_columns(path: &Path, n: usize) -> Result<Vec<Vec<f64>>> {
    let mut r = csv::Reader::from_path(path).with_context(|| format!("opening {}", path.display()))?;
    let mut cols = vec![Vec::new(); n];
    for (i, rec) in r.records().enumerate() {
        let rec = rec.with_context(|| format!("{}: row {}", path.display(), i + 2))?;
        if rec.len() < n {
            bail!(
                "{}: row {} has {} fields, expected {n}",
                path.display(),
                i + 2,
                rec.len()
            );
        }
        for (c, col) in cols.iter_mut().enumerate() {
            let v: f64 = rec[c]
                .trim()
                .parse()
                .with_context(|| format!("{}: row {} column {}", path.display(), i + 2, c + 1))?;
            col.push(v);
        }
    }
    Ok(cols)
}

fn pairs(path: &Path) -> Result<Vec<(f64, f64)>> {
    let c = read_columns(path, 2)?;
    Ok(c[0].iter().copied().zip(c[1].iter().copied()).collect())
}

fn histogram(path: &Path) -> Result<Histogram> {
    let f = File::open(path).with_context(|| format!("opening {}", path.display()))?;
    Histogram::read_csv(BufReader::new(f)).with_context(|| format!("reading {}", path.display()))
}

fn summary(model: &str, values: &[(&str, f64)], converged: bool) -> FitResult {
    FitResult {
        model: model.to_string(),
        params: values.iter().map(|(k, v)| (k.to_string(), *v)).collect(),
        sigmas: Default::default(),
        residual_rms: 0.0,
        converged,
    }
}

pub fn fit_file(model: FitModel, path: &Path) -> Result<FitResult> {
    Ok(match model {
        FitModel::Lorentzian => fit_lorentzian_resonance(&pairs(path)?)?.fit,
        FitModel::GaussianPeak => {
            let p = fit_gaussian_peak(&histogram(path)?)?;
            match p.fit {
                Some(f) => f,
                None => summary(
                    "gaussian_peak",
                    &[("center_ps", p.center_ps), ("fwhm_ps", p.fwhm_ps), ("counts", p.counts)],
                    false,
                ),
            }
        }
        FitModel::Vpi => {
            let s = pairs(path)?;
            let lo = s.iter().map(|p| p.0).fold(f64::INFINITY, f64::min);
            let hi = s.iter().map(|p| p.0).fold(f64::NEG_INFINITY, f64::max);
            fit_vpi_samples(&s, hi - lo, None)?.fit
        }
        FitModel::Visibility => {
            let mut h = histogram(path)?;
            h.fold_period_ps = Some(h.bin_width_ps * h.counts.len() as u64);
            let v = modulation_visibility(&h)?;
            let mut f = summary(
                "fourier_visibility",
                &[
                    ("v_peak", v.v_peak),
                    ("v_standard", v.v_standard),
                    ("max", v.max),
                    ("min", v.min),
                    ("mean", v.mean),
                    ("fundamental_amplitude", v.fundamental_amplitude),
                ],
                true,
            );
            f.residual_rms = v.residual_rms;
            f
        }
        FitModel::EnvelopeSinusoid => {
            let c = read_columns(path, 3)?;
            let reference: Vec<(f64, f64)> = c[0].iter().copied().zip(c[1].iter().copied()).collect();
            let device: Vec<(f64, f64)> = c[0].iter().copied().zip(c[2].iter().copied()).collect();
            let r = fit_envelope_sinusoid_spectrum(&reference, &device)?;
            let mut f = r.device.fit;
            f.params.insert("insertion_loss_db".into(), r.insertion_loss_db);
            f.params.insert("fringe_period_nm".into(), r.fringe_period_nm);
            f.converged &= r.reference.fit.converged;
            f
        }
    })
}
