//! Detector characterization: efficiency versus bias (fig3ab), output pulse
//! decay (fig3cd) and timing jitter (fig3ef).

use anyhow::{anyhow, bail, Context, Result};
use lnoi_core::analysis::fit_gaussian_peak;
use lnoi_core::mc::SimMode;
use lnoi_core::snspd::{compute_ocde, output_pulse_trace};
use lnoi_core::timetag::{start_stop_histogram_periodic, DET1_CHANNEL, DET2_CHANNEL};
use lnoi_core::{run_scenario, ClickEvent, Histogram, Scenario};
use rayon::prelude::*;

use super::{csv_table, histogram_csv, num, Outcome, Params};
use crate::report::Measurement;

const CHANNELS: [u32; 2] = [DET1_CHANNEL, DET2_CHANNEL];

/// The scenario with the flux referenced to detector `ch` and the MZI routing
/// all light towards it.
fn aimed_at(base: &Scenario, ch: u32, phase: f64) -> Scenario {
    let mut s = base.clone();
    s.source.reference_detector = ch as u8;
    s.operating_phase_rad = Some(phase);
    s
}

/// Largest drop between neighbouring points, in units of the Poisson σ of the
/// difference. Zero when the curve never decreases.
fn worst_decrease_sigma(counts: &[u64]) -> f64 {
    counts
        .windows(2)
        .map(|w| {
            let (a, b) = (w[0] as f64, w[1] as f64);
            (a - b) / (a + b).sqrt().max(1.0)
        })
        .fold(0.0, f64::max)
}

/// `(max − min) / mean` over the points inside `range`.
fn flatness(fractions: &[f64], ocde: &[f64], range: [f64; 2]) -> Option<f64> {
    let eps = 1e-9;
    let inside: Vec<f64> = fractions
        .iter()
        .zip(ocde)
        .filter(|(f, _)| **f >= range[0] - eps && **f <= range[1] + eps)
        .map(|(_, o)| *o)
        .collect();
    if inside.len() < 2 {
        return None;
    }
    let max = inside.iter().copied().fold(f64::MIN, f64::max);
    let min = inside.iter().copied().fold(f64::MAX, f64::min);
    let mean = inside.iter().sum::<f64>() / inside.len() as f64;
    Some((max - min) / mean)
}

pub(super) fn efficiency(p: &Params) -> Result<Outcome> {
    let base = p.scenario("scenario")?;
    let phases: [f64; 2] = p.get("routing_phase_rad")?;
    let fractions: Vec<f64> = p.get("bias_fractions")?;
    let range: [f64; 2] = p.get("flatness_range")?;
    let flux = base.source.flux_photons_per_s;
    let duration = base.duration_s;

    struct Sweep {
        ocde: f64,
        counts: Vec<u64>,
        curve: Vec<f64>,
    }
    let results: Vec<Result<Sweep>> = CHANNELS
        .par_iter()
        .zip(phases)
        .map(|(&ch, phase)| {
            let s = aimed_at(&base, ch, phase);
            let spec = s.detectors[ch as usize - 1];
            let rate = run_scenario(&s)?.click_rate(ch);
            let ocde = compute_ocde(rate, spec.dark_rate_cps, flux)?;

            // the bias sweep uses the per-bin path with a single bin per point
            let counts = fractions
                .par_iter()
                .map(|&f| {
                    let mut s = s.clone();
                    s.detectors[ch as usize - 1].bias_current_ua = f * spec.critical_current_ua;
                    s.mode = SimMode::Binned { bin_width_s: duration };
                    let out = run_scenario(&s).with_context(|| format!("bias fraction {f}"))?;
                    let b = out.binned.as_ref().ok_or_else(|| anyhow!("binned run without bins"))?;
                    Ok(if ch == DET1_CHANNEL {
                        b.det1.iter().sum()
                    } else {
                        b.det2.iter().sum()
                    })
                })
                .collect::<Result<Vec<u64>>>()?;
            let curve = counts
                .iter()
                .map(|&n| compute_ocde(n as f64 / duration, spec.dark_rate_cps, flux).map_err(Into::into))
                .collect::<Result<Vec<f64>>>()?;
            Ok(Sweep { ocde, counts, curve })
        })
        .collect();

    let mut o = Outcome::default();
    let mut sweeps = Vec::new();
    for (k, r) in results.into_iter().enumerate() {
        let sw = r.with_context(|| format!("detector {}", k + 1))?;
        let d = k + 1;
        let spec = base.detectors[k];
        o.measure(&format!("ocde_det{d}"), Measurement::against(sw.ocde, spec.ocde()?));
        o.metric(&format!("ocde_det{d}"), sw.ocde);
        o.metric(&format!("bias_ua_det{d}"), spec.bias_current_ua);
        let mono = worst_decrease_sigma(&sw.counts);
        o.measure(&format!("monotonicity_det{d}"), Measurement::of(mono));
        o.measure(
            &format!("plateau_flatness_det{d}"),
            match flatness(&fractions, &sw.curve, range) {
                Some(f) => Measurement::of(f),
                None => Measurement::missing("fewer than two bias points inside the flatness range"),
            },
        );
        sweeps.push(sw);
    }
    let rows = fractions.iter().enumerate().map(|(i, &f)| {
        [
            num(f),
            num(f * base.detectors[0].critical_current_ua),
            sweeps[0].counts[i].to_string(),
            num(sweeps[0].curve[i]),
            num(f * base.detectors[1].critical_current_ua),
            sweeps[1].counts[i].to_string(),
            num(sweeps[1].curve[i]),
        ]
    });
    o.data(
        "data.csv",
        csv_table(
            [
                "bias_fraction",
                "bias_ua_det1",
                "counts_det1",
                "ocde_det1",
                "bias_ua_det2",
                "counts_det2",
                "ocde_det2",
            ],
            rows,
        )?,
    );
    Ok(o)
}

pub(super) fn decay(p: &Params) -> Result<Outcome> {
    let s = p.scenario("scenario")?;
    let dt = p.f64("sample_period_ps")?;
    let mut o = Outcome::default();
    let mut traces = Vec::new();
    for (k, ch) in CHANNELS.into_iter().enumerate() {
        let spec = &s.detectors[k];
        let click = ClickEvent {
            channel: ch,
            true_arrival_ps: 0,
            recorded_time_ps: 0,
            dark: false,
        };
        let trace = output_pulse_trace(spec, &click, dt)?;
        let d = k + 1;
        let m = match trace.decay_time_ps() {
            Some(t) => Measurement::against(t, spec.decay_time_ns * 1e3),
            None => Measurement::missing("trace never falls to 1/e"),
        };
        if let Some(v) = m.value {
            o.metric(&format!("decay_time_ps_det{d}"), v);
        }
        o.measure(&format!("decay_time_det{d}"), m);
        traces.push(trace);
    }
    if traces[0].start_ps != traces[1].start_ps {
        bail!("pulse traces start at different times");
    }
    let n = traces.iter().map(|t| t.samples.len()).max().unwrap_or(0);
    let cell = |k: usize, i: usize| traces[k].samples.get(i).map(|v| num(*v)).unwrap_or_default();
    let rows = (0..n).map(|i| [num(traces[0].start_ps as f64 + i as f64 * dt), cell(0, i), cell(1, i)]);
    o.data(
        "data.csv",
        csv_table(["time_ps", "amplitude_det1", "amplitude_det2"], rows)?,
    );
    Ok(o)
}

/// Bins within `half_window` of the peak, for plotting.
fn crop(h: &Histogram, center_ps: f64, half_window: u64) -> Histogram {
    let w = h.bin_width_ps;
    let center_bin = ((center_ps - h.origin_ps as f64) / w as f64).floor().max(0.0) as usize;
    let half = (half_window / w) as usize;
    let lo = center_bin.saturating_sub(half).min(h.counts.len());
    let hi = (center_bin + half + 1).min(h.counts.len()).max(lo);
    Histogram {
        bin_width_ps: w,
        origin_ps: h.origin_ps + (lo as u64 * w) as i64,
        counts: h.counts[lo..hi].to_vec(),
        fold_period_ps: None,
    }
}

pub(super) fn jitter(p: &Params) -> Result<Outcome> {
    let s = p.scenario("scenario")?;
    let bin = p.u64("bin_width_ps")?;
    let max_delta = p.u64("max_delta_ps")?;
    let half = p.u64("plot_half_window_ps")?;
    let out = run_scenario(&s)?;
    let laser = out.laser_ref.ok_or_else(|| anyhow!("jitter needs a pulsed source"))?;
    let h = start_stop_histogram_periodic(&out.det2, &laser, bin, max_delta)?;
    let events = h.total() as f64;
    let peak = fit_gaussian_peak(&h).context("fitting the start-stop peak")?;
    let target = s.detectors[1].jitter_fwhm_ps;

    let mut o = Outcome::default();
    let mut m = Measurement::against(peak.fwhm_ps, target).with_counts(events);
    if peak.resolution_limited {
        m = m.with_note("peak narrower than the histogram resolution");
    }
    o.measure("jitter_fwhm_det2", m);
    o.metric("jitter_fwhm_ps_det2", peak.fwhm_ps);
    o.metric("peak_center_ps", peak.center_ps);
    o.metric("start_stop_events", events);
    o.data("data.csv", histogram_csv(&crop(&h, peak.center_ps, half)));
    if let Some(f) = peak.fit {
        o.fit("jitter_det2", f);
    }
    Ok(o)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn decrease_in_sigma_units() {
        assert_eq!(worst_decrease_sigma(&[1, 5, 100, 100]), 0.0);
        let s = worst_decrease_sigma(&[100, 80]);
        assert!((s - 20.0 / 180f64.sqrt()).abs() < 1e-12);
    }

    #[test]
    fn flatness_inside_range_only() {
        let f = [0.5, 0.85, 0.9, 0.95];
        let o = [0.1, 0.25, 0.26, 0.25];
        let v = flatness(&f, &o, [0.85, 0.95]).unwrap();
        assert!((v - 0.01 / (0.76 / 3.0)).abs() < 1e-12);
        assert!(flatness(&f, &o, [0.6, 0.7]).is_none());
    }

    #[test]
    fn crop_keeps_bins_around_the_peak() {
        let h = Histogram {
            bin_width_ps: 2,
            origin_ps: 0,
            counts: (0..100).collect(),
            fold_period_ps: None,
        };
        let c = crop(&h, 101.0, 10);
        assert_eq!(c.origin_ps, 90);
        assert_eq!(c.counts, (45..56).collect::<Vec<u64>>());
        assert_eq!(crop(&h, 1.0, 10).origin_ps, 0);
    }
}
