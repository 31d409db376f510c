//! Curve fitting and metric extraction.

mod calibration;
pub mod lm;
mod resonance;
mod spectrum;
mod waveform;

pub use calibration::{
    calibrate_photon_flux, extinction_db, extinction_from_counts, photon_energy_j, CalibrationInputs, Extinction,
    FluxCalibration, PLANCK_J_S, SPEED_OF_LIGHT_M_S,
};
pub use resonance::{fit_lorentzian_resonance, lorentzian_dip, ResonanceFit};
pub use spectrum::{fit_envelope_sinusoid_spectrum, fit_gaussian_envelope, EnvelopeFit, InsertionLossFit};
pub use waveform::{
    extract_vpi_from_ramp, fit_gaussian_peak, fit_vpi_samples, modulation_visibility, GaussianPeak, Visibility, VpiFit,
};

use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;

use lm::LmOutcome;

/// Serializable fit report: `{model, params, sigmas, residual_rms, converged}`.
///
/// Parameters of a fit with `converged == false` are unreliable.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FitResult {
    pub model: String,
    pub params: BTreeMap<String, f64>,
    pub sigmas: BTreeMap<String, f64>,
    pub residual_rms: f64,
    pub converged: bool,
}

impl FitResult {
    pub(crate) fn from_outcome(model: &str, names: &[&str], out: &LmOutcome) -> Self {
        let sig = out.sigmas();
        Self {
            model: model.to_string(),
            params: names
                .iter()
                .zip(&out.params)
                .map(|(n, v)| (n.to_string(), *v))
                .collect(),
            sigmas: names.iter().zip(sig).map(|(n, s)| (n.to_string(), s)).collect(),
            residual_rms: out.residual_rms(),
            converged: out.converged,
        }
    }

    pub fn param(&self, name: &str) -> f64 {
        self.params.get(name).copied().unwrap_or(f64::NAN)
    }

    pub fn sigma(&self, name: &str) -> f64 {
        self.sigmas.get(name).copied().unwrap_or(f64::NAN)
    }

    pub fn is_reliable(&self) -> bool {
        self.converged
    }
}

/// Robust noise estimate from first differences (MAD scaled to σ).
pub(crate) fn difference_noise(y: &[f64]) -> f64 {
    if y.len() < 3 {
        return 0.0;
    }
    let mut d: Vec<f64> = y.windows(2).map(|w| (w[1] - w[0]).abs()).collect();
    d.sort_by(f64::total_cmp);
    let med = d[d.len() / 2];
    med * 1.4826 / std::f64::consts::SQRT_2
}

/// Least squares for `y ≈ X β` with a small number of columns.
pub(crate) fn linear_lsq(columns: &[Vec<f64>], y: &[f64]) -> Option<(Vec<f64>, f64)> {
    let n = y.len();
    let m = columns.len();
    let x = nalgebra::DMatrix::from_fn(n, m, |i, j| columns[j][i]);
    let yv = nalgebra::DVector::from_column_slice(y);
    let xt = x.transpose();
    let beta = (&xt * &x).cholesky()?.solve(&(&xt * &yv));
    let resid = &x * &beta - yv;
    Some((beta.iter().copied().collect(), resid.norm_squared()))
}
