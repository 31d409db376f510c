use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};
use std::f64::consts::{LN_2, PI};

use super::lm::{minimize, LmOptions, Problem};
use super::FitResult;
use crate::error::{invalid, Error, Result};
use crate::optics::linear_to_db;

const K4LN2: f64 = 4.0 * LN_2;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EnvelopeFit {
    pub peak: f64,
    pub center_nm: f64,
    pub fwhm_nm: f64,
    pub fit: FitResult,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct InsertionLossFit {
    pub insertion_loss_db: f64,
    pub reference: EnvelopeFit,
    /// Envelope of the fringe maxima of the device output.
    pub device: EnvelopeFit,
    pub fringe_visibility: f64,
    pub fringe_period_nm: f64,
}

struct Gauss<'a> {
    x: &'a [f64],
    y: &'a [f64],
}

impl Problem for Gauss<'_> {
    fn residual_count(&self) -> usize {
        self.x.len()
    }

    fn residuals(&self, p: &[f64], out: &mut [f64]) {
        for (i, (&x, &y)) in self.x.iter().zip(self.y).enumerate() {
            let q = (x - p[1]) / p[2];
            out[i] = p[0] * (-K4LN2 * q * q).exp() - y;
        }
    }

    fn jacobian(&self, p: &[f64], jac: &mut DMatrix<f64>) {
        let (a, w) = (p[0], p[2]);
        for (i, &x) in self.x.iter().enumerate() {
            let q = (x - p[1]) / w;
            let e = (-K4LN2 * q * q).exp();
            jac[(i, 0)] = e;
            jac[(i, 1)] = a * e * 2.0 * K4LN2 * q / w;
            jac[(i, 2)] = a * e * 2.0 * K4LN2 * q * q / w;
        }
    }
}

/// Gaussian envelope times a fringe that is sinusoidal in wavenumber:
/// `A·exp(−4ln2((λ−c)/w)²)·(1 + v·cos(K·(1/λ − 1/λr) + ψ))/2`.
struct GaussFringe<'a> {
    x: &'a [f64],
    u: &'a [f64],
    y: &'a [f64],
}

impl Problem for GaussFringe<'_> {
    fn residual_count(&self) -> usize {
        self.x.len()
    }

    fn residuals(&self, p: &[f64], out: &mut [f64]) {
        for i in 0..self.x.len() {
            let q = (self.x[i] - p[1]) / p[2];
            let e = (-K4LN2 * q * q).exp();
            let th = p[4] * self.u[i] + p[5];
            out[i] = p[0] * e * (1.0 + p[3] * th.cos()) / 2.0 - self.y[i];
        }
    }

    fn jacobian(&self, p: &[f64], jac: &mut DMatrix<f64>) {
        let (a, w, v) = (p[0], p[2], p[3]);
        for i in 0..self.x.len() {
            let q = (self.x[i] - p[1]) / w;
            let e = (-K4LN2 * q * q).exp();
            let th = p[4] * self.u[i] + p[5];
            let (s, c) = th.sin_cos();
            let f = (1.0 + v * c) / 2.0;
            jac[(i, 0)] = e * f;
            jac[(i, 1)] = a * e * 2.0 * K4LN2 * q / w * f;
            jac[(i, 2)] = a * e * 2.0 * K4LN2 * q * q / w * f;
            jac[(i, 3)] = a * e * c / 2.0;
            jac[(i, 4)] = -a * e * v * s * self.u[i] / 2.0;
            jac[(i, 5)] = -a * e * v * s / 2.0;
        }
    }
}

fn sorted_xy(samples: &[(f64, f64)]) -> (Vec<f64>, Vec<f64>) {
    let mut pts = samples.to_vec();
    pts.sort_by(|a, b| a.0.total_cmp(&b.0));
    pts.into_iter().unzip()
}

fn gaussian_start(x: &[f64], y: &[f64]) -> [f64; 3] {
    let (imax, &ymax) = y
        .iter()
        .enumerate()
        .max_by(|a, b| a.1.total_cmp(b.1))
        .expect("non-empty");
    let total: f64 = y.iter().map(|v| v.max(0.0)).sum();
    let centroid = x.iter().zip(y).map(|(x, y)| x * y.max(0.0)).sum::<f64>() / total;
    let var = x
        .iter()
        .zip(y)
        .map(|(x, y)| (x - centroid).powi(2) * y.max(0.0))
        .sum::<f64>()
        / total;
    let fwhm = (var.sqrt() * 2.354_820_045).max(x[1] - x[0]);
    let _ = imax;
    [ymax, centroid, fwhm]
}

/// Fits `A·exp(−4ln2((λ−c)/w)²)` to a grating-coupler transmission spectrum.
pub fn fit_gaussian_envelope(samples: &[(f64, f64)]) -> Result<EnvelopeFit> {
    if samples.len() < 5 {
        return Err(invalid("spectrum", "need at least 5 samples"));
    }
    let (x, y) = sorted_xy(samples);
    let prob = Gauss { x: &x, y: &y };
    let out = minimize(&prob, &gaussian_start(&x, &y), LmOptions::default());
    let fit = FitResult::from_outcome("gaussian_envelope", &["peak", "center_nm", "fwhm_nm"], &out);
    let (a, c, w) = (out.params[0], out.params[1], out.params[2].abs());
    if !(c >= x[0] && c <= x[x.len() - 1]) {
        return Err(Error::PeakOutOfRange);
    }
    Ok(EnvelopeFit {
        peak: a,
        center_nm: c,
        fwhm_nm: w,
        fit,
    })
}

/// Best fringe frequency (in wavenumber) by scanning a linear model
/// `y ≈ G(λ)·(c0 + a·cos(K u) + b·sin(K u))`.
fn scan_fringe(u: &[f64], g: &[f64], y: &[f64], k_min: f64, k_max: f64, steps: usize) -> (f64, [f64; 3]) {
    let mut best = (f64::INFINITY, k_min, [0.0; 3]);
    for s in 0..=steps {
        let k = k_min + (k_max - k_min) * s as f64 / steps as f64;
        // normal equations for the three-column model
        let mut ata = [[0.0f64; 3]; 3];
        let mut aty = [0.0f64; 3];
        let mut yy = 0.0;
        for i in 0..u.len() {
            let (sn, cs) = (k * u[i]).sin_cos();
            let row = [g[i], g[i] * cs, g[i] * sn];
            for r in 0..3 {
                for c in 0..3 {
                    ata[r][c] += row[r] * row[c];
                }
                aty[r] += row[r] * y[i];
            }
            yy += y[i] * y[i];
        }
        let m = nalgebra::Matrix3::from_fn(|r, c| ata[r][c]);
        let Some(ch) = m.cholesky() else { continue };
        let beta = ch.solve(&nalgebra::Vector3::from(aty));
        let ssr = yy - beta.dot(&nalgebra::Vector3::from(aty));
        if ssr < best.0 {
            best = (ssr, k, [beta[0], beta[1], beta[2]]);
        }
    }
    (best.1, best.2)
}

/// Insertion loss of the MZI from a reference-device spectrum and an MZI
/// output spectrum, comparing the fitted envelope maxima.
pub fn fit_envelope_sinusoid_spectrum(reference: &[(f64, f64)], device: &[(f64, f64)]) -> Result<InsertionLossFit> {
    let reference_fit = fit_gaussian_envelope(reference)?;
    if device.len() < 20 {
        return Err(invalid("device_spectrum", "need at least 20 samples"));
    }
    let (x, y) = sorted_xy(device);
    let rough = {
        let prob = Gauss { x: &x, y: &y };
        minimize(&prob, &gaussian_start(&x, &y), LmOptions::default())
    };
    let (ga, gc, gw) = (rough.params[0], rough.params[1], rough.params[2].abs());
    if !(gc >= x[0] && gc <= x[x.len() - 1]) {
        return Err(Error::PeakOutOfRange);
    }
    let lambda_ref = gc;
    let u: Vec<f64> = x.iter().map(|l| 1.0 / l - 1.0 / lambda_ref).collect();
    let g: Vec<f64> = x.iter().map(|l| (-K4LN2 * ((l - gc) / gw).powi(2)).exp()).collect();

    let dl = (x[x.len() - 1] - x[0]) / (x.len() - 1) as f64;
    let span_u = (u[0] - u[u.len() - 1]).abs();
    let k_max = 2.0 * PI * lambda_ref * lambda_ref / (3.0 * dl);
    let k_min = 2.0 * PI * 1.5 / span_u;
    if k_min >= k_max {
        return Err(invalid("device_spectrum", "too few samples to resolve a fringe"));
    }
    let coarse_step = 0.25 / span_u;
    let steps = (((k_max - k_min) / coarse_step).ceil() as usize).max(10);
    let (k0, _) = scan_fringe(&u, &g, &y, k_min, k_max, steps);
    let (k1, beta) = scan_fringe(&u, &g, &y, k0 - coarse_step, k0 + coarse_step, 200);

    let c0 = beta[0];
    let amp = beta[1].hypot(beta[2]);
    let start = [
        2.0 * ga * c0,
        gc,
        gw,
        (amp / c0).min(1.0),
        k1,
        (-beta[2]).atan2(beta[1]),
    ];
    let prob = GaussFringe { x: &x, u: &u, y: &y };
    let out = minimize(&prob, &start, LmOptions::default());
    let p = &out.params;
    let (a, c, w, v) = (p[0], p[1], p[2].abs(), p[3].abs());
    if !(c >= x[0] && c <= x[x.len() - 1]) {
        return Err(Error::PeakOutOfRange);
    }
    if !p.iter().all(|v| v.is_finite()) || !(a > 0.0) {
        return Err(Error::Fit("envelope-sinusoid fit diverged".into()));
    }
    let fit = FitResult::from_outcome(
        "gaussian_times_sinusoid",
        &[
            "amplitude",
            "center_nm",
            "fwhm_nm",
            "visibility",
            "wavenumber_k_nm",
            "phase_rad",
        ],
        &out,
    );
    let peak = a * (1.0 + v) / 2.0;
    let device_fit = EnvelopeFit {
        peak,
        center_nm: c,
        fwhm_nm: w,
        fit,
    };
    Ok(InsertionLossFit {
        insertion_loss_db: linear_to_db(peak / reference_fit.peak),
        reference: reference_fit,
        device: device_fit,
        fringe_visibility: v,
        fringe_period_nm: 2.0 * PI * c * c / p[4].abs(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::electrooptic::EomSpec;
    use crate::optics::{db_to_linear, device_spectrum, CircuitSpec, GratingCouplerSpec};

    fn grid() -> Vec<f64> {
        (0..=600).map(|i| 1520.0 + i as f64 * 0.1).collect()
    }

    fn reference(g: &GratingCouplerSpec) -> Vec<(f64, f64)> {
        grid().into_iter().map(|l| (l, g.efficiency(l).powi(2) * 0.5)).collect()
    }

    fn device(c: &CircuitSpec) -> Vec<(f64, f64)> {
        let eom = EomSpec::cryo_dc();
        grid()
            .into_iter()
            .map(|l| (l, device_spectrum(c, &eom, l, 0.0).out2))
            .collect()
    }

    #[test]
    fn envelope_fit_exact() {
        let g = GratingCouplerSpec::default();
        let f = fit_gaussian_envelope(&reference(&g)).unwrap();
        assert!((f.center_nm - 1550.0).abs() < 1e-8);
        // product of two equal Gaussians narrows by sqrt(2)
        assert!((f.fwhm_nm - 40.0 / 2f64.sqrt()).abs() < 1e-6);
    }

    #[test]
    fn insertion_loss_noiseless() {
        let c = CircuitSpec::default();
        let r = fit_envelope_sinusoid_spectrum(&reference(&c.grating_in), &device(&c)).unwrap();
        assert!((r.insertion_loss_db - 0.82).abs() < 1e-6, "{}", r.insertion_loss_db);
        assert!((r.fringe_period_nm - 2.0).abs() < 1e-3);
    }

    #[test]
    fn identical_spectra_zero_loss() {
        let mut c = CircuitSpec::default();
        c.mzi.insertion_loss_db = 0.0;
        let dev = device(&c);
        let g = c.grating_in;
        let refl: Vec<_> = grid()
            .into_iter()
            .map(|l| (l, g.efficiency(l).powi(2) * 0.5 * db_to_linear(0.0)))
            .collect();
        let r = fit_envelope_sinusoid_spectrum(&refl, &dev).unwrap();
        assert!(r.insertion_loss_db.abs() < 1e-6);
    }

    #[test]
    fn peak_outside_range() {
        let g = GratingCouplerSpec {
            center_wavelength_nm: 1600.0,
            ..Default::default()
        };
        let s: Vec<_> = (0..100)
            .map(|i| (1520.0 + i as f64 * 0.2, g.efficiency(1520.0 + i as f64 * 0.2)))
            .collect();
        assert_eq!(fit_gaussian_envelope(&s).unwrap_err(), Error::PeakOutOfRange);
    }
}
