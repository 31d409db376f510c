//! Waveguide-integrated superconducting nanowire detector model.
//!
//! A detector turns photon arrival times into clicks: each photon is absorbed
//! and registered with the bias-dependent on-chip efficiency, dark clicks are a
//! homogeneous Poisson process, a non-paralyzable dead time follows every
//! accepted click, and recorded times carry Gaussian timing jitter.

use rand_distr::{Distribution, Exp, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::rng::{streams, CounterRng};

/// Ratio between the Gaussian FWHM and its standard deviation, `2√(2 ln 2)`.
pub const FWHM_PER_SIGMA: f64 = 2.354_820_045_030_949_3;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct DetectorSpec {
    pub critical_current_ua: f64,
    pub bias_current_ua: f64,
    pub absorption_db_per_um: f64,
    pub nanowire_length_um: f64,
    pub internal_eff_max: f64,
    pub sigmoid_midpoint_ua: f64,
    pub sigmoid_width_ua: f64,
    pub dark_rate_cps: f64,
    pub decay_time_ns: f64,
    pub dead_time_ns: f64,
    pub jitter_fwhm_ps: f64,
    #[serde(default = "default_rise_ps")]
    pub rise_time_ps: f64,
}

fn default_rise_ps() -> f64 {
    250.0
}

/// Fraction of the bias at which the detectors are operated.
pub const OPERATING_BIAS_FRACTION: f64 = 0.85;

impl DetectorSpec {
    /// Detector biased at 85 % of `critical_current_ua` whose efficiency at that
    /// bias equals `plateau_ocde`. Sigmoid midpoint and width default to 0.6·Ic
    /// and 0.05·Ic; dead time to three decay times.
    pub fn with_plateau(critical_current_ua: f64, plateau_ocde: f64, jitter_fwhm_ps: f64) -> Self {
        let mut d = Self {
            critical_current_ua,
            bias_current_ua: OPERATING_BIAS_FRACTION * critical_current_ua,
            absorption_db_per_um: 0.35,
            nanowire_length_um: 100.0,
            internal_eff_max: 1.0,
            sigmoid_midpoint_ua: 0.6 * critical_current_ua,
            sigmoid_width_ua: 0.05 * critical_current_ua,
            dark_rate_cps: 2.0,
            decay_time_ns: 6.0,
            dead_time_ns: 18.0,
            jitter_fwhm_ps,
            rise_time_ps: default_rise_ps(),
        };
        let at_bias = d.absorption_probability() * d.sigmoid(d.bias_current_ua);
        d.internal_eff_max = plateau_ocde / at_bias;
        d
    }

    /// Det1: Ic = 14 μA, 24 % plateau, room-temperature amplifier jitter.
    pub fn det1() -> Self {
        Self::with_plateau(14.0, 0.24, 50.0)
    }

    /// Det2: Ic = 12.5 μA, 27 % plateau, cryogenic amplifier jitter of 17 ps.
    pub fn det2() -> Self {
        Self::with_plateau(12.5, 0.27, 17.0)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.critical_current_ua > 0.0) {
            return Err(invalid("critical_current_ua", "must be > 0"));
        }
        if !(self.bias_current_ua >= 0.0) {
            return Err(invalid("bias_current_ua", "must be >= 0"));
        }
        if !(self.internal_eff_max > 0.0 && self.internal_eff_max <= 1.0) {
            return Err(invalid(
                "internal_eff_max",
                format!("{} not in (0, 1]", self.internal_eff_max),
            ));
        }
        if !(self.absorption_db_per_um >= 0.0 && self.nanowire_length_um >= 0.0) {
            return Err(invalid("absorption_db_per_um", "absorption and length must be >= 0"));
        }
        if !(self.sigmoid_width_ua > 0.0) {
            return Err(invalid("sigmoid_width_ua", "must be > 0"));
        }
        if !(self.dark_rate_cps >= 0.0) {
            return Err(invalid("dark_rate_cps", "must be >= 0"));
        }
        if !(self.decay_time_ns > 0.0) {
            return Err(invalid("decay_time_ns", "must be > 0"));
        }
        if !(self.dead_time_ns >= self.decay_time_ns) {
            return Err(invalid("dead_time_ns", "must be >= decay_time_ns"));
        }
        if !(self.jitter_fwhm_ps > 0.0) {
            return Err(invalid("jitter_fwhm_ps", "must be > 0"));
        }
        if !(self.rise_time_ps >= 0.0) {
            return Err(invalid("rise_time_ps", "must be >= 0"));
        }
        Ok(())
    }

    pub fn check_operable(&self) -> Result<()> {
        if self.bias_current_ua >= self.critical_current_ua {
            Err(Error::Latched {
                bias_ua: self.bias_current_ua,
                critical_ua: self.critical_current_ua,
            })
        } else {
            Ok(())
        }
    }

    pub fn absorption_probability(&self) -> f64 {
        waveguide_absorption_prob(self.absorption_db_per_um, self.nanowire_length_um)
    }

    fn sigmoid(&self, bias_ua: f64) -> f64 {
        1.0 / (1.0 + (-(bias_ua - self.sigmoid_midpoint_ua) / self.sigmoid_width_ua).exp())
    }

    /// Efficiency at the configured bias.
    pub fn ocde(&self) -> Result<f64> {
        detection_efficiency(self, self.bias_current_ua)
    }

    pub fn dead_time_ps(&self) -> u64 {
        (self.dead_time_ns * 1e3).round() as u64
    }

    pub fn jitter_sigma_ps(&self) -> f64 {
        self.jitter_fwhm_ps / FWHM_PER_SIGMA
    }

    /// Mean click rate for a constant photon flux, including dark counts and
    /// the non-paralyzable dead-time loss.
    pub fn expected_click_rate(&self, photon_rate: f64) -> Result<f64> {
        let n = photon_rate * self.ocde()? + self.dark_rate_cps;
        Ok(n / (1.0 + n * self.dead_time_ns * 1e-9))
    }
}

/// Probability that a photon is absorbed over `length_um` of nanowire.
pub fn waveguide_absorption_prob(rate_db_per_um: f64, length_um: f64) -> f64 {
    1.0 - 10f64.powf(-rate_db_per_um * length_um / 10.0)
}

/// On-chip detection efficiency at bias `bias_ua`.
pub fn detection_efficiency(spec: &DetectorSpec, bias_ua: f64) -> Result<f64> {
    if bias_ua >= spec.critical_current_ua {
        return Err(Error::Latched {
            bias_ua,
            critical_ua: spec.critical_current_ua,
        });
    }
    if bias_ua < 0.0 {
        return Err(invalid("bias_current_ua", "must be >= 0"));
    }
    Ok(spec.absorption_probability() * spec.internal_eff_max * spec.sigmoid(bias_ua))
}

/// OCDE = (CR − DCR) / Φ.
pub fn compute_ocde(count_rate: f64, dark_rate: f64, flux: f64) -> Result<f64> {
    if !(flux > 0.0) {
        return Err(invalid("flux", "efficiency is undefined without photon flux"));
    }
    if count_rate < dark_rate {
        return Err(Error::NegativeEfficiency { count_rate, dark_rate });
    }
    Ok((count_rate - dark_rate) / flux)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct ClickEvent {
    pub channel: u32,
    pub true_arrival_ps: u64,
    pub recorded_time_ps: i64,
    pub dark: bool,
}

fn detector_stream(channel: u32, k: u64) -> u64 {
    streams::DETECTOR_BASE + 4 * u64::from(channel) + k
}

/// Turns sorted photon arrivals into accepted clicks for one detector channel.
///
/// Dark clicks are drawn over `window = (start_ps, end_ps)`. Output is sorted
/// by true arrival time and is a pure function of the inputs and `rng`.
pub fn process_arrivals(
    spec: &DetectorSpec,
    arrivals: &[u64],
    window: (u64, u64),
    rng: &CounterRng,
    channel: u32,
) -> Result<Vec<ClickEvent>> {
    spec.check_operable()?;
    if let Some(i) = arrivals.windows(2).position(|w| w[1] < w[0]) {
        return Err(Error::UnsortedArrivals { index: i + 1 });
    }
    let ocde = spec.ocde()?;

    let mut pick = rng.stream(detector_stream(channel, 0));
    let photons: Vec<u64> = arrivals.iter().copied().filter(|_| pick.next_f64() < ocde).collect();

    let darks = dark_clicks(spec.dark_rate_cps, window, rng, detector_stream(channel, 1));

    let dead = spec.dead_time_ps();
    let mut jitter_rng = rng.stream(detector_stream(channel, 2));
    let jitter = Normal::new(0.0, spec.jitter_sigma_ps()).map_err(|e| invalid("jitter_fwhm_ps", e.to_string()))?;

    let mut out = Vec::with_capacity(photons.len() + darks.len());
    let mut last: Option<u64> = None;
    let (mut i, mut j) = (0, 0);
    while i < photons.len() || j < darks.len() {
        // photon wins ties so the merge order is fixed
        let take_photon = j >= darks.len() || (i < photons.len() && photons[i] <= darks[j]);
        let (t, dark) = if take_photon {
            i += 1;
            (photons[i - 1], false)
        } else {
            j += 1;
            (darks[j - 1], true)
        };
        if matches!(last, Some(l) if t - l < dead) {
            continue;
        }
        last = Some(t);
        let dt: f64 = jitter.sample(&mut jitter_rng);
        out.push(ClickEvent {
            channel,
            true_arrival_ps: t,
            recorded_time_ps: t as i64 + dt.round() as i64,
            dark,
        });
    }
    Ok(out)
}

/// Homogeneous Poisson process at `rate_cps` over `[start, end)`.
pub fn dark_clicks(rate_cps: f64, window: (u64, u64), rng: &CounterRng, stream: u64) -> Vec<u64> {
    let (start, end) = window;
    if !(rate_cps > 0.0) || end <= start {
        return Vec::new();
    }
    let gap = Exp::new(rate_cps * 1e-12).expect("positive rate");
    let mut s = rng.stream(stream);
    let mut t = start as f64;
    let mut out = Vec::new();
    loop {
        t += gap.sample(&mut s);
        if t >= end as f64 {
            break;
        }
        out.push(t as u64);
    }
    out
}

/// Sampled analog response of one click, normalized to unit peak.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PulseTrace {
    pub start_ps: i64,
    pub sample_period_ps: f64,
    pub samples: Vec<f64>,
}

impl PulseTrace {
    pub fn time_of(&self, index: usize) -> f64 {
        self.start_ps as f64 + index as f64 * self.sample_period_ps
    }

    /// Time from the maximum sample to the first sample at or below `max/e`.
    pub fn decay_time_ps(&self) -> Option<f64> {
        let (peak_idx, peak) = self
            .samples
            .iter()
            .copied()
            .enumerate()
            .max_by(|a, b| a.1.total_cmp(&b.1))?;
        let level = peak / std::f64::consts::E;
        let k = self.samples[peak_idx..].iter().position(|&v| v <= level)?;
        Some(k as f64 * self.sample_period_ps)
    }
}

/// Analog trace of a click: linear rise to 1 over the rise time, then
/// exponential decay with the detector's decay time.
pub fn output_pulse_trace(spec: &DetectorSpec, click: &ClickEvent, sample_period_ps: f64) -> Result<PulseTrace> {
    if !(sample_period_ps > 0.0) {
        return Err(invalid("sample_period_ps", "must be > 0"));
    }
    let tau = spec.decay_time_ns * 1e3;
    let rise = spec.rise_time_ps;
    let pre = 2_000.0;
    let span = pre + rise + 8.0 * tau;
    let n = (span / sample_period_ps).ceil() as usize + 1;
    let t0 = click.recorded_time_ps as f64;
    let start = (t0 - pre).floor();
    let samples = (0..n)
        .map(|i| {
            let dt = start + i as f64 * sample_period_ps - t0;
            if dt < 0.0 {
                0.0
            } else if dt < rise {
                dt / rise
            } else {
                (-(dt - rise) / tau).exp()
            }
        })
        .collect();
    Ok(PulseTrace {
        start_ps: start as i64,
        sample_period_ps,
        samples,
    })
}
