use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use super::lm::{minimize, LmOptions, Problem};
use super::{difference_noise, FitResult};
use crate::error::{invalid, Error, Result};
use crate::optics::{infer_intrinsic_q, IntrinsicQEstimate};

/// `baseline·(1 − (1 − T_min)/(1 + (2(λ−λ0)/FWHM)²))` with `FWHM = λ0/Q_L`.
pub fn lorentzian_dip(lambda_nm: f64, lambda0_nm: f64, loaded_q: f64, min_transmission: f64, baseline: f64) -> f64 {
    let x = 2.0 * (lambda_nm - lambda0_nm) * loaded_q / lambda0_nm;
    baseline * (1.0 - (1.0 - min_transmission) / (1.0 + x * x))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ResonanceFit {
    pub lambda0_nm: f64,
    pub loaded_q: f64,
    pub min_transmission: f64,
    pub intrinsic: IntrinsicQEstimate,
    pub fit: FitResult,
}

struct Dip<'a> {
    x: &'a [f64],
    y: &'a [f64],
}

// params: baseline, depth, centre offset (nm), half width (nm)
impl Problem for Dip<'_> {
    fn residual_count(&self) -> usize {
        self.x.len()
    }

    fn residuals(&self, p: &[f64], out: &mut [f64]) {
        for (i, (&x, &y)) in self.x.iter().zip(self.y).enumerate() {
            let u = (x - p[2]) / p[3];
            out[i] = p[0] * (1.0 - p[1] / (1.0 + u * u)) - y;
        }
    }

    fn jacobian(&self, p: &[f64], jac: &mut DMatrix<f64>) {
        let (b, d, h) = (p[0], p[1], p[3]);
        for (i, &x) in self.x.iter().enumerate() {
            let u = (x - p[2]) / h;
            let l = 1.0 / (1.0 + u * u);
            jac[(i, 0)] = 1.0 - d * l;
            jac[(i, 1)] = -b * l;
            jac[(i, 2)] = -2.0 * b * d * u * l * l / h;
            jac[(i, 3)] = -2.0 * b * d * u * u * l * l / h;
        }
    }
}

/// Fits a single all-pass resonance dip in a `(λ [nm], T)` spectrum.
pub fn fit_lorentzian_resonance(spectrum: &[(f64, f64)]) -> Result<ResonanceFit> {
    if spectrum.len() < 20 {
        return Err(invalid("spectrum", "need at least 20 samples"));
    }
    let mut pts = spectrum.to_vec();
    pts.sort_by(|a, b| a.0.total_cmp(&b.0));
    let lambda_ref = pts[pts.len() / 2].0;
    let x: Vec<f64> = pts.iter().map(|p| p.0 - lambda_ref).collect();
    let y: Vec<f64> = pts.iter().map(|p| p.1).collect();

    let mut sorted = y.clone();
    sorted.sort_by(f64::total_cmp);
    let baseline = sorted[(sorted.len() * 9) / 10];
    let (imin, &ymin) = y
        .iter()
        .enumerate()
        .min_by(|a, b| a.1.total_cmp(b.1))
        .expect("non-empty");
    let depth = 1.0 - ymin / baseline;
    let noise = difference_noise(&y);
    if !(baseline > 0.0) || !(depth > 1e-9) || baseline * depth < 5.0 * noise {
        return Err(Error::NoDip);
    }
    let half = baseline * (1.0 - depth / 2.0);
    let left = (0..imin).rev().find(|&i| y[i] >= half).unwrap_or(0);
    let right = (imin..y.len()).find(|&i| y[i] >= half).unwrap_or(y.len() - 1);
    let spacing = (x[x.len() - 1] - x[0]) / (x.len() - 1) as f64;
    let hwhm = ((x[right] - x[left]) / 2.0).max(spacing);

    let problem = Dip { x: &x, y: &y };
    let out = minimize(&problem, &[baseline, depth, x[imin], hwhm], LmOptions::default());
    let [b, d, x0, h] = [out.params[0], out.params[1], out.params[2], out.params[3].abs()];
    if !out.params.iter().all(|v| v.is_finite()) || !(b > 0.0) {
        return Err(Error::Fit("resonance fit diverged".into()));
    }
    if x[x.len() - 1] - x[0] < 3.0 * 2.0 * h {
        return Err(invalid("spectrum", "must span at least three linewidths"));
    }
    let lambda0 = lambda_ref + x0;
    let loaded_q = lambda0 / (2.0 * h);
    let min_transmission = (1.0 - d).max(0.0);
    let mut fit = FitResult::from_outcome(
        "lorentzian_dip",
        &["baseline", "depth", "center_offset_nm", "hwhm_nm"],
        &out,
    );
    fit.params.insert("lambda0_nm".into(), lambda0);
    fit.params.insert("loaded_q".into(), loaded_q);
    let sh = fit.sigma("hwhm_nm");
    fit.sigmas.insert("lambda0_nm".into(), fit.sigma("center_offset_nm"));
    fit.sigmas.insert("loaded_q".into(), loaded_q * sh / h);
    Ok(ResonanceFit {
        lambda0_nm: lambda0,
        loaded_q,
        min_transmission,
        intrinsic: infer_intrinsic_q(loaded_q, min_transmission),
        fit,
    })
}
