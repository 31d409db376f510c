//! Electro-optic switching: Vπ from ramp histograms (fig4ab), DC extinction
//! (fig4c) and bias stability (fig4d).

use std::collections::BTreeMap;

use anyhow::{anyhow, bail, Context, Result};
use lnoi_core::analysis::lm::{minimize, LmOptions, Problem};
use lnoi_core::analysis::{extinction_from_counts, extract_vpi_from_ramp, Extinction};
use lnoi_core::electrooptic::phase_from_voltage;
use lnoi_core::mc::SimMode;
use lnoi_core::optics::mzi_output_powers;
use lnoi_core::timetag::{fold_histogram, DET1_CHANNEL, DET2_CHANNEL};
use lnoi_core::{run_scenario, DriveWaveform, FitResult, Scenario};
use rayon::prelude::*;

use super::{csv_table, histogram_csv, num, Outcome, Params};
use crate::report::Measurement;

pub(super) fn vpi(p: &Params) -> Result<Outcome> {
    let s = p.scenario("scenario")?;
    let bin = p.u64("bin_width_ps")?;
    let v_pi_rt = p.f64("v_pi_rt_volts")?;
    let out = run_scenario(&s)?;
    let trig = out
        .trigger
        .ok_or_else(|| anyhow!("the Vπ measurement needs a ramp drive"))?;

    let mut o = Outcome::default();
    let mut fitted = Vec::new();
    for (k, ch) in [DET1_CHANNEL, DET2_CHANNEL].into_iter().enumerate() {
        let d = k + 1;
        let h = fold_histogram(out.detector_tags(ch), trig.period_ps, trig.offset_ps, bin)?;
        let name = if d == 1 {
            "data.csv".to_string()
        } else {
            format!("data_det{d}.csv")
        };
        o.data(&name, histogram_csv(&h));
        // dark counts are characterized separately, so the fringe floor is known
        let dark_per_bin = s.detectors[k].dark_rate_cps * s.duration_s * bin as f64 / trig.period_ps as f64;
        match extract_vpi_from_ramp(&h, &s.drive, Some(dark_per_bin)) {
            Ok(f) => {
                o.measure(
                    &format!("v_pi_det{d}"),
                    Measurement::of(f.v_pi_volts).with_counts(h.total() as f64),
                );
                o.metric(&format!("v_pi_volts_det{d}"), f.v_pi_volts);
                fitted.push(f.v_pi_volts);
                o.fit(&format!("v_pi_det{d}"), f.fit);
            }
            Err(e) => o.measure(
                &format!("v_pi_det{d}"),
                Measurement::missing(format!("fit failed: {e}")),
            ),
        }
    }
    // Vπ·L follows from the configured half-wave voltages and electrode length
    let mut rt = s.eom;
    rt.v_pi_volts = v_pi_rt;
    o.measure("v_pi_length_rt", Measurement::of(rt.v_pi_length_v_cm()));
    o.measure("v_pi_length_cryo", Measurement::of(s.eom.v_pi_length_v_cm()));
    o.metric("v_pi_length_rt_v_cm", rt.v_pi_length_v_cm());
    o.metric("v_pi_length_cryo_v_cm", s.eom.v_pi_length_v_cm());
    if !fitted.is_empty() {
        let mean = fitted.iter().sum::<f64>() / fitted.len() as f64;
        o.metric("v_pi_length_fitted_v_cm", mean * s.eom.electrode_length_mm / 10.0);
    }
    Ok(o)
}

fn extinction_measurement(e: Extinction) -> Measurement {
    let m = Measurement::of(e.db());
    if e.is_lower_bound() {
        m.with_note("lower bound: off-state counts are at the dark-count floor")
    } else {
        m
    }
}

fn detector_counts(out: &lnoi_core::ScenarioOutput) -> [u64; 2] {
    match &out.binned {
        Some(b) => [b.det1.iter().sum(), b.det2.iter().sum()],
        None => [out.det1.len() as u64, out.det2.len() as u64],
    }
}

pub(super) fn extinction(p: &Params) -> Result<Outcome> {
    let base = p.scenario("scenario")?;
    let v_on = p.f64("switch_volts")?;
    let from = p.f64("sweep_from_volts")?;
    let to = p.f64("sweep_to_volts")?;
    let steps = p.u64("sweep_steps")? as usize;
    let at = |v: f64| {
        let mut s = base.clone();
        s.drive = DriveWaveform::dc(v);
        s
    };
    let [zero, switched] = [0.0, v_on].map(at);
    let [c0, c1] = [&zero, &switched].map(|s| run_scenario(s).map(|o| detector_counts(&o)));
    let (c0, c1) = (c0?, c1?);
    let dark = |k: usize| base.detectors[k].dark_rate_cps * base.duration_s;
    // 0 V routes the light to Det1, the switching voltage to Det2
    let e1 = extinction_from_counts(c0[0] as f64, c1[0] as f64, dark(0))?;
    let e2 = extinction_from_counts(c1[1] as f64, c0[1] as f64, dark(1))?;

    let static_phase = base.circuit.static_phase(base.wavelength_nm()?);
    let bar = |v: f64| mzi_output_powers(&base.circuit.mzi, static_phase + phase_from_voltage(&base.eom, v)).0;
    let model_db = 10.0 * (bar(0.0) / bar(v_on)).log10();

    // best-case bar extinction of the circuit itself: max/min over the phase
    let grid = p.u64("phase_grid_points")?.max(2);
    let (mut hi, mut lo) = (0.0f64, f64::INFINITY);
    for i in 0..grid {
        let (b, _) = mzi_output_powers(&base.circuit.mzi, std::f64::consts::TAU * i as f64 / grid as f64);
        hi = hi.max(b);
        lo = lo.min(b);
    }
    let circuit_db = 10.0 * (hi / lo).log10();

    let mut o = Outcome::default();
    o.measure("extinction_det1_model", Measurement::of(circuit_db));
    o.metric("circuit_extinction_db_det1", circuit_db);
    // shot noise on both count totals
    let sigma_db = 10.0 / std::f64::consts::LN_10 * (1.0 / c0[0].max(1) as f64 + 1.0 / c1[0].max(1) as f64).sqrt();
    let mut m1 = extinction_measurement(e1);
    if m1.note.is_none() {
        m1 = m1.with_note(format!("counting uncertainty {sigma_db:.2} dB"));
    }
    m1.target = Some(model_db);
    o.metric("extinction_sigma_db_det1", sigma_db);
    o.measure("extinction_det1", m1);
    o.measure("extinction_det2", extinction_measurement(e2));
    o.metric("extinction_db_det1", e1.db());
    o.metric("extinction_db_det2", e2.db());
    o.metric("model_extinction_db_det1", model_db);
    for (name, v) in [
        ("det1_counts_0v", c0[0]),
        ("det2_counts_0v", c0[1]),
        ("det1_counts_on", c1[0]),
        ("det2_counts_on", c1[1]),
    ] {
        o.metric(name, v as f64);
    }

    let volts: Vec<f64> = (0..steps)
        .map(|i| from + (to - from) * i as f64 / (steps - 1).max(1) as f64)
        .collect();
    let sweep = volts
        .par_iter()
        .map(|&v| {
            let mut s = at(v);
            s.mode = SimMode::Binned {
                bin_width_s: s.duration_s,
            };
            run_scenario(&s).map(|o| detector_counts(&o))
        })
        .collect::<lnoi_core::Result<Vec<[u64; 2]>>>()
        .context("voltage sweep")?;
    let rows = volts
        .iter()
        .zip(&sweep)
        .map(|(&v, c)| [num(v), c[0].to_string(), c[1].to_string()]);
    o.data("data.csv", csv_table(["volts", "det1_counts", "det2_counts"], rows)?);
    Ok(o)
}

/// Bins of full width; a shorter final bin is left out.
fn full_bins(counts: &[u64], last_bin_ps: u64, bin_ps: u64) -> &[u64] {
    if last_bin_ps < bin_ps && counts.len() > 1 {
        &counts[..counts.len() - 1]
    } else {
        counts
    }
}

/// Largest |10·log10(c/mean)| over the bins.
fn max_deviation_db(counts: &[u64]) -> Option<f64> {
    if counts.is_empty() {
        return None;
    }
    let mean = counts.iter().sum::<u64>() as f64 / counts.len() as f64;
    if !(mean > 0.0) {
        return None;
    }
    Some(
        counts
            .iter()
            .map(|&c| (10.0 * (c.max(1) as f64 / mean).log10()).abs())
            .fold(0.0, f64::max),
    )
}

/// `A·exp(−t/τ)`, parameters `[A, τ]`.
struct Exponential<'a> {
    t: &'a [f64],
    y: &'a [f64],
}

impl Problem for Exponential<'_> {
    fn residual_count(&self) -> usize {
        self.t.len()
    }

    fn residuals(&self, p: &[f64], out: &mut [f64]) {
        for ((r, &t), &y) in out.iter_mut().zip(self.t).zip(self.y) {
            *r = p[0] * (-t / p[1]).exp() - y;
        }
    }
}

fn fit_exponential(t: &[f64], y: &[f64]) -> Result<FitResult> {
    let a0 = y.first().copied().ok_or_else(|| anyhow!("no samples"))?;
    // first sample below a0/e gives the starting time constant
    let tau0 = t
        .iter()
        .zip(y)
        .find(|(_, v)| v.abs() <= a0.abs() / std::f64::consts::E)
        .map(|(t, _)| *t)
        .unwrap_or(t[t.len() - 1])
        .max(t[1] - t[0]);
    let out = minimize(&Exponential { t, y }, &[a0, tau0], LmOptions::default());
    if !(out.params[1] > 0.0) || !out.params.iter().all(|v| v.is_finite()) {
        bail!("relaxation fit diverged");
    }
    let names = ["amplitude_rad", "tau_s"];
    let sig = out.sigmas();
    Ok(FitResult {
        model: "exponential_relaxation".into(),
        params: names
            .iter()
            .zip(&out.params)
            .map(|(n, v)| (n.to_string(), *v))
            .collect::<BTreeMap<_, _>>(),
        sigmas: names.iter().zip(sig).map(|(n, s)| (n.to_string(), s)).collect(),
        residual_rms: out.residual_rms(),
        converged: out.converged,
    })
}

fn binned_channel(s: &Scenario, detector: usize) -> Result<(Vec<u64>, u64, u64)> {
    let out = run_scenario(s)?;
    let b = out
        .binned
        .ok_or_else(|| anyhow!("stability runs use the binned mode"))?;
    let counts = if detector == 1 { b.det1 } else { b.det2 };
    Ok((counts, b.bin_width_ps, b.last_bin_ps))
}

pub(super) fn stability(p: &Params) -> Result<Outcome> {
    let cryo = p.scenario("scenario")?;
    let rt = p.scenario("rt_scenario")?;
    let window = p.f64("relaxation_window_s")?;
    let mut o = Outcome::default();

    let det = usize::from(cryo.source.reference_detector);
    let (counts, bin_ps, last_ps) = binned_channel(&cryo, det)?;
    let used = full_bins(&counts, last_ps, bin_ps);
    let min_counts = used.iter().copied().min().unwrap_or(0) as f64;
    let m = match max_deviation_db(used) {
        Some(d) => Measurement::of(d).with_counts(min_counts),
        None => Measurement::missing("no counts").with_counts(min_counts),
    };
    if let Some(v) = m.value {
        o.metric("max_deviation_db", v);
    }
    o.measure("max_deviation", m);
    o.metric("min_counts_per_bin", min_counts);
    o.metric("bins", used.len() as f64);
    let mean = used.iter().sum::<u64>() as f64 / used.len().max(1) as f64;
    let rows = counts.iter().enumerate().map(|(i, &c)| {
        let dev = if mean > 0.0 {
            10.0 * (c.max(1) as f64 / mean).log10()
        } else {
            f64::NAN
        };
        [num(i as f64 * bin_ps as f64 * 1e-12), c.to_string(), num(dev)]
    });
    o.data(
        "data.csv",
        csv_table(["time_s", &format!("det{det}_counts"), "deviation_db"], rows)?,
    );

    // room temperature: phase excursion of a DC step against a 0 V reference
    let rt_det = usize::from(rt.source.reference_detector);
    let mut reference = rt.clone();
    reference.drive.offset_volts = 0.0;
    let (ref_counts, _, ref_last) = binned_channel(&reference, rt_det)?;
    let (rt_counts, rt_bin, rt_last) = binned_channel(&rt, rt_det)?;
    let ref_used = full_bins(&ref_counts, ref_last, rt_bin);
    let r_q = ref_used.iter().sum::<u64>() as f64 / ref_used.len().max(1) as f64;
    let rt_used = full_bins(&rt_counts, rt_last, rt_bin);
    let bin_s = rt_bin as f64 * 1e-12;
    let t: Vec<f64> = (0..rt_used.len()).map(|i| (i as f64 + 0.5) * bin_s).collect();
    let phase: Vec<f64> = rt_used
        .iter()
        .map(|&c| (c as f64 / r_q - 1.0).clamp(-1.0, 1.0).asin())
        .collect();
    let rows = t
        .iter()
        .zip(rt_used)
        .zip(&phase)
        .map(|((&t, &c), &ph)| [num(t), c.to_string(), num(ph)]);
    o.data(
        "data_rt.csv",
        csv_table(["time_s", &format!("det{rt_det}_counts"), "phase_rad"], rows)?,
    );
    if r_q > 0.0 && t.len() >= 3 {
        match fit_exponential(&t, &phase) {
            Ok(f) => {
                let tau = f.param("tau_s");
                let relaxed = 1.0 - (-window / tau).exp();
                o.measure("rt_relaxation", Measurement::of(relaxed));
                o.metric("rt_tau_s", tau);
                o.metric("rt_relaxation", relaxed);
                o.fit("rt_relaxation", f);
            }
            Err(e) => o.measure("rt_relaxation", Measurement::missing(e.to_string())),
        }
    } else {
        o.measure(
            "rt_relaxation",
            Measurement::missing("too few bins for the relaxation fit"),
        );
    }
    Ok(o)
}
