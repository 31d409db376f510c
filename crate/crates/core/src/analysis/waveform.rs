use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};
use statrs::function::erf::erfc;
use std::f64::consts::{FRAC_1_SQRT_2, PI, TAU};

use super::lm::{minimize, LmOptions, Problem};
use super::{linear_lsq, FitResult};
use crate::electrooptic::{DriveWaveform, WaveformKind};
use crate::error::{invalid, Error, Result};
use crate::snspd::FWHM_PER_SIGMA;
use crate::timetag::Histogram;

/// Bins with counts needed before a Gaussian is fitted at all.
const MIN_POPULATED_BINS: usize = 5;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GaussianPeak {
    pub center_ps: f64,
    pub sigma_ps: f64,
    pub fwhm_ps: f64,
    pub counts: f64,
    pub background_per_bin: f64,
    /// The peak spans too few bins to be fitted; `fwhm_ps` is then the bin width.
    pub resolution_limited: bool,
    pub fit: Option<FitResult>,
}

fn normal_cdf(z: f64) -> f64 {
    0.5 * erfc(-z * FRAC_1_SQRT_2)
}

fn normal_pdf(z: f64) -> f64 {
    (-0.5 * z * z).exp() / (TAU).sqrt()
}

/// Counts per bin from a Gaussian integrated over each bin, plus a flat floor.
struct BinnedGauss<'a> {
    lo: &'a [f64],
    width: f64,
    y: &'a [f64],
    weight: Vec<f64>,
}

impl Problem for BinnedGauss<'_> {
    fn residual_count(&self) -> usize {
        self.y.len()
    }

    fn residuals(&self, p: &[f64], out: &mut [f64]) {
        let (n, mu, s, b) = (p[0], p[1], p[2].abs(), p[3]);
        for i in 0..self.y.len() {
            let z0 = (self.lo[i] - mu) / s;
            let z1 = (self.lo[i] + self.width - mu) / s;
            let m = n * (normal_cdf(z1) - normal_cdf(z0)) + b;
            out[i] = (m - self.y[i]) * self.weight[i];
        }
    }

    fn jacobian(&self, p: &[f64], jac: &mut DMatrix<f64>) {
        let (n, mu, s) = (p[0], p[1], p[2].abs());
        let sign = if p[2] < 0.0 { -1.0 } else { 1.0 };
        for i in 0..self.y.len() {
            let z0 = (self.lo[i] - mu) / s;
            let z1 = (self.lo[i] + self.width - mu) / s;
            let (f0, f1) = (normal_pdf(z0), normal_pdf(z1));
            let w = self.weight[i];
            jac[(i, 0)] = (normal_cdf(z1) - normal_cdf(z0)) * w;
            jac[(i, 1)] = -n * (f1 - f0) / s * w;
            jac[(i, 2)] = -n * (f1 * z1 - f0 * z0) / s * sign * w;
            jac[(i, 3)] = w;
        }
    }
}

/// Fits a Gaussian timing peak in a histogram.
///
/// The model integrates the Gaussian over each bin, so peaks only a few bins
/// wide are not broadened by the binning. The fit uses Pearson weights
/// (variance = model) over ±8σ around the peak.
pub fn fit_gaussian_peak(h: &Histogram) -> Result<GaussianPeak> {
    if h.is_empty() {
        return Err(Error::EmptyHistogram);
    }
    let w = h.bin_width_ps as f64;
    let (imax, &cmax) = h.counts.iter().enumerate().max_by_key(|(_, c)| **c).expect("non-empty");

    // moments over the contiguous region above 1/20 of the maximum
    let thresh = (cmax as f64 / 20.0).max(1.0);
    let mut lo = imax;
    while lo > 0 && h.counts[lo - 1] as f64 >= thresh {
        lo -= 1;
    }
    let mut hi = imax;
    while hi + 1 < h.counts.len() && h.counts[hi + 1] as f64 >= thresh {
        hi += 1;
    }
    let populated = h.counts.iter().filter(|&&c| c > 0).count();
    if populated < MIN_POPULATED_BINS {
        return Ok(GaussianPeak {
            center_ps: h.bin_center(imax),
            sigma_ps: w / FWHM_PER_SIGMA,
            fwhm_ps: w,
            counts: h.total() as f64,
            background_per_bin: 0.0,
            resolution_limited: true,
            fit: None,
        });
    }
    let (mut s0, mut s1, mut s2) = (0.0, 0.0, 0.0);
    for i in lo..=hi {
        let c = h.counts[i] as f64;
        let x = h.bin_center(i);
        s0 += c;
        s1 += c * x;
        s2 += c * x * x;
    }
    let mean = s1 / s0;
    let sigma0 = ((s2 / s0 - mean * mean) - w * w / 12.0).max(w * w / 16.0).sqrt();

    // fit window of ±8σ, at least ±3 bins
    let half = (8.0 * sigma0).max(3.0 * w);
    let idx: Vec<usize> = (0..h.counts.len())
        .filter(|&i| {
            let c = h.bin_center(i);
            c >= mean - half && c <= mean + half
        })
        .collect();
    if idx.iter().filter(|&&i| h.counts[i] > 0).count() < MIN_POPULATED_BINS {
        return Ok(GaussianPeak {
            center_ps: mean,
            sigma_ps: w / FWHM_PER_SIGMA,
            fwhm_ps: w,
            counts: s0,
            background_per_bin: 0.0,
            resolution_limited: true,
            fit: None,
        });
    }
    let lo_edges: Vec<f64> = idx.iter().map(|&i| h.bin_start(i) as f64).collect();
    let y: Vec<f64> = idx.iter().map(|&i| h.counts[i] as f64).collect();
    let edge_floor = (y[0] + y[y.len() - 1]) / 2.0;
    let mut p = vec![s0, mean, sigma0, edge_floor.min(thresh)];

    let mut prob = BinnedGauss {
        lo: &lo_edges,
        width: w,
        y: &y,
        weight: y.iter().map(|c| 1.0 / c.max(1.0).sqrt()).collect(),
    };
    let mut out = minimize(&prob, &p, LmOptions::default());
    // second pass with the model as the variance estimate
    {
        p.clone_from(&out.params);
        let mut r = vec![0.0; y.len()];
        let unit = BinnedGauss {
            lo: &lo_edges,
            width: w,
            y: &y,
            weight: vec![1.0; y.len()],
        };
        unit.residuals(&p, &mut r);
        prob.weight = r.iter().zip(&y).map(|(d, c)| 1.0 / (d + c).max(1.0).sqrt()).collect();
        out = minimize(&prob, &p, LmOptions::default());
    }
    let sigma = out.params[2].abs();
    let fit = FitResult::from_outcome(
        "binned_gaussian",
        &["counts", "center_ps", "sigma_ps", "background"],
        &out,
    );
    if !sigma.is_finite() || sigma <= 0.0 {
        return Err(Error::Fit("gaussian width did not converge".into()));
    }
    Ok(GaussianPeak {
        center_ps: out.params[1],
        sigma_ps: sigma,
        fwhm_ps: sigma * FWHM_PER_SIGMA,
        counts: out.params[0],
        background_per_bin: out.params[3],
        resolution_limited: false,
        fit: Some(fit),
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct VpiFit {
    pub v_pi_volts: f64,
    pub phase_offset_rad: f64,
    pub amplitude: f64,
    pub background: f64,
    pub fit: FitResult,
}

/// `A(1 + cos(πV/Vπ + φ0)) + B` over (volts, counts) samples. Parameters are
/// `[A, Vπ, φ0, B]`, or `[A, Vπ, φ0]` when B is known.
struct Fringe<'a> {
    v: &'a [f64],
    y: &'a [f64],
    background: Option<f64>,
}

impl Problem for Fringe<'_> {
    fn residual_count(&self) -> usize {
        self.v.len()
    }

    fn residuals(&self, p: &[f64], out: &mut [f64]) {
        for i in 0..self.v.len() {
            let th = PI * self.v[i] / p[1] + p[2];
            let b = self.background.unwrap_or_else(|| p[3]);
            out[i] = p[0] * (1.0 + th.cos()) + b - self.y[i];
        }
    }

    fn jacobian(&self, p: &[f64], jac: &mut DMatrix<f64>) {
        let (a, vpi) = (p[0], p[1]);
        for i in 0..self.v.len() {
            let th = PI * self.v[i] / vpi + p[2];
            let (s, c) = th.sin_cos();
            jac[(i, 0)] = 1.0 + c;
            jac[(i, 1)] = a * s * PI * self.v[i] / (vpi * vpi);
            jac[(i, 2)] = -a * s;
            if self.background.is_none() {
                jac[(i, 3)] = 1.0;
            }
        }
    }
}

fn wrap_phase(x: f64) -> f64 {
    let y = x.rem_euclid(TAU);
    if y > PI {
        y - TAU
    } else {
        y
    }
}

/// Extracts the half-wave voltage from a count histogram folded at the period
/// of a ramp drive, with the fold phase aligned to the ramp trigger.
///
/// Each bin centre is mapped to the instantaneous ramp voltage before
/// fitting with [`fit_vpi_samples`]. A bin containing the flyback of the
/// sawtooth is dropped. `known_background` is the expected dark count per
/// bin when it has been measured separately.
pub fn extract_vpi_from_ramp(h: &Histogram, ramp: &DriveWaveform, known_background: Option<f64>) -> Result<VpiFit> {
    ramp.validate()?;
    if ramp.kind != WaveformKind::Ramp {
        return Err(invalid("ramp", "drive must be a ramp"));
    }
    let period = ramp
        .period_ps()
        .ok_or_else(|| invalid("ramp.frequency_hz", "period must be a whole number of picoseconds"))?;
    if h.fold_period_ps != Some(period) {
        return Err(invalid("histogram", "must be folded at the ramp period"));
    }
    if h.is_empty() {
        return Err(Error::EmptyHistogram);
    }
    let w = h.bin_width_ps;
    let samples: Vec<(f64, f64)> = (0..h.counts.len())
        .filter(|&i| {
            // the bin must lie inside one rising edge of the sawtooth
            let a = h.bin_start(i).max(0) as u64;
            let b = (a + w).min(period);
            b > a && ramp.voltage_at_ps(b - 1) >= ramp.voltage_at_ps(a)
        })
        .map(|i| (ramp.voltage_at(h.bin_center(i) * 1e-12), h.counts[i] as f64))
        .collect();
    fit_vpi_samples(&samples, ramp.vpp, known_background)
}

/// Fits `A(1 + cos(πV/Vπ + φ0)) + B` to (volts, counts) samples from a ramp
/// of peak-to-peak amplitude `vpp`.
///
/// A coarse profile scan over Vπ solves the remaining parameters linearly,
/// then all four are refined together. With `known_background` set, B is held
/// at that value; this matters when the ramp only covers the top of a fringe,
/// where B trades off against A and Vπ. A fringe wider than the ramp does not
/// pin Vπ down and is rejected.
pub fn fit_vpi_samples(samples: &[(f64, f64)], vpp: f64, known_background: Option<f64>) -> Result<VpiFit> {
    if !(vpp > 0.0 && vpp.is_finite()) {
        return Err(invalid("vpp", "must be positive"));
    }
    if samples.len() < 8 {
        return Err(invalid("samples", "need at least 8 points"));
    }
    let v: Vec<f64> = samples.iter().map(|s| s.0).collect();
    let y: Vec<f64> = samples.iter().map(|s| s.1).collect();
    let vspan = v.iter().cloned().fold(f64::NEG_INFINITY, f64::max) - v.iter().cloned().fold(f64::INFINITY, f64::min);
    if !(vspan > 0.0) {
        return Err(invalid("samples", "voltage does not vary"));
    }

    // scan k = π/Vπ for Vπ in [vpp/50, 2·vpp]
    let (k_lo, k_hi) = (PI / (2.0 * vpp), 50.0 * PI / vpp);
    let step = 0.1 / vspan;
    let n = ((k_hi - k_lo) / step).ceil() as usize;
    let mut best: Option<(f64, f64, Vec<f64>)> = None;
    for j in 0..=n {
        let k = k_lo + (k_hi - k_lo) * j as f64 / n as f64;
        let cols = vec![
            vec![1.0; v.len()],
            v.iter().map(|x| (k * x).cos()).collect(),
            v.iter().map(|x| (k * x).sin()).collect(),
        ];
        if let Some((beta, ssr)) = linear_lsq(&cols, &y) {
            if best.as_ref().is_none_or(|b| ssr < b.0) {
                best = Some((ssr, k, beta));
            }
        }
    }
    let (_, k, beta) = best.ok_or_else(|| Error::Fit("degenerate ramp samples".into()))?;
    let r = beta[1].hypot(beta[2]);
    let mut start = vec![r, PI / k, (-beta[2]).atan2(beta[1])];
    if known_background.is_none() {
        start.push(beta[0] - r);
    }

    let prob = Fringe {
        v: &v,
        y: &y,
        background: known_background,
    };
    let out = minimize(&prob, &start, LmOptions::default());
    let mut p = out.params.clone();
    let fixed = known_background.is_some();
    if let Some(b) = known_background {
        p.push(b);
    }
    // canonical form: A > 0, Vπ > 0
    if p[1] < 0.0 {
        p[1] = -p[1];
        p[2] = -p[2];
    }
    if p[0] < 0.0 && !fixed {
        p[3] += 2.0 * p[0];
        p[0] = -p[0];
        p[2] += PI;
    }
    p[2] = wrap_phase(p[2]);
    let mut out = out;
    out.params = p[..if fixed { 3 } else { 4 }].to_vec();
    let names = ["amplitude", "v_pi_volts", "phase_offset_rad", "background"];
    let mut fit = FitResult::from_outcome("raised_cosine_ramp", &names[..out.params.len()], &out);
    if fixed {
        fit.params.insert("background".into(), p[3]);
        fit.sigmas.insert("background".into(), 0.0);
    }
    if !p[1].is_finite() || p[1] > vpp {
        return Err(Error::Unidentifiable(format!(
            "fitted V_pi {:.3} V exceeds the {:.3} V ramp amplitude",
            p[1], vpp
        )));
    }
    Ok(VpiFit {
        v_pi_volts: p[1],
        phase_offset_rad: p[2],
        amplitude: p[0],
        background: p[3],
        fit,
    })
}

/// Modulation depth of a folded count histogram.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Visibility {
    /// `(max − min) / max`
    pub v_peak: f64,
    /// `(max − min) / (max + min)`
    pub v_standard: f64,
    pub max: f64,
    pub min: f64,
    pub fundamental_amplitude: f64,
    pub mean: f64,
    pub residual_rms: f64,
}

const VISIBILITY_HARMONICS: usize = 3;

/// Visibility of a histogram folded at the drive period.
///
/// A Fourier series up to the third harmonic of the fold period is fitted by
/// linear least squares; max and min are taken from the fitted curve, with
/// the minimum clamped at zero.
pub fn modulation_visibility(h: &Histogram) -> Result<Visibility> {
    let period = h
        .fold_period_ps
        .ok_or_else(|| invalid("histogram", "not folded at a drive period"))? as f64;
    if h.is_empty() {
        return Err(Error::EmptyHistogram);
    }
    // a trailing partial bin would be under-filled
    let full = (h.fold_period_ps.unwrap() / h.bin_width_ps) as usize;
    let n = full.min(h.counts.len());
    if n < 2 * VISIBILITY_HARMONICS + 2 {
        return Err(invalid("histogram", "too few bins per period"));
    }
    let phase: Vec<f64> = (0..n).map(|i| TAU * h.bin_center(i) / period).collect();
    let y: Vec<f64> = h.counts[..n].iter().map(|&c| c as f64).collect();
    let mut cols = vec![vec![1.0; n]];
    for m in 1..=VISIBILITY_HARMONICS {
        cols.push(phase.iter().map(|p| (m as f64 * p).cos()).collect());
        cols.push(phase.iter().map(|p| (m as f64 * p).sin()).collect());
    }
    let (beta, ssr) = linear_lsq(&cols, &y).ok_or_else(|| Error::Fit("singular visibility fit".into()))?;
    let eval = |p: f64| {
        let mut s = beta[0];
        for m in 1..=VISIBILITY_HARMONICS {
            let (sn, cs) = (m as f64 * p).sin_cos();
            s += beta[2 * m - 1] * cs + beta[2 * m] * sn;
        }
        s
    };
    let (mut max, mut min) = (f64::NEG_INFINITY, f64::INFINITY);
    for i in 0..4096 {
        let f = eval(TAU * i as f64 / 4096.0);
        max = max.max(f);
        min = min.min(f);
    }
    let min = min.max(0.0);
    if !(max > 0.0) {
        return Err(Error::EmptyHistogram);
    }
    Ok(Visibility {
        v_peak: (max - min) / max,
        v_standard: (max - min) / (max + min),
        max,
        min,
        fundamental_amplitude: beta[1].hypot(beta[2]),
        mean: beta[0],
        residual_rms: (ssr / n as f64).sqrt(),
    })
}
