//! Fixtures shared by the benchmarks.

use std::f64::consts::FRAC_PI_2;

use lnoi_core::timetag::{fold_histogram, DET2_CHANNEL};
use lnoi_core::{run_scenario, DriveWaveform, EomSpec, Histogram, Scenario, SourceSpec, TimeTag};

/// A 100 MHz sine drive at quadrature with the detector-plane flux on Det2.
pub fn modulation_scenario(duration_s: f64, seed: u64) -> Scenario {
    let mut s = Scenario::new(SourceSpec::cw(1e6, 1550.0).at_detector(2), duration_s, seed);
    s.eom = EomSpec::cryo_ac();
    s.drive = DriveWaveform::sine(5.0, 100e6);
    s.operating_phase_rad = Some(FRAC_PI_2);
    s
}

/// Det2 clicks and the trigger period of a modulation run.
pub fn modulation_tags(duration_s: f64, seed: u64) -> (Vec<TimeTag>, u64, u64) {
    let out = run_scenario(&modulation_scenario(duration_s, seed)).expect("fixture scenario is valid");
    let trig = out.trigger.expect("sine drive has a trigger");
    let tags = out.detector_tags(DET2_CHANNEL).to_vec();
    (tags, trig.period_ps, trig.offset_ps)
}

/// Noise-free start-stop peak: Gaussian with the given FWHM on 1 ps bins.
pub fn jitter_histogram(fwhm_ps: f64, events: f64) -> Histogram {
    let sigma = fwhm_ps / (8.0 * 2f64.ln()).sqrt();
    let counts = (0..400)
        .map(|i| {
            let x = i as f64 - 200.0;
            (events / (sigma * (2.0 * std::f64::consts::PI).sqrt()) * (-0.5 * (x / sigma).powi(2)).exp()).round() as u64
        })
        .collect();
    Histogram {
        bin_width_ps: 1,
        origin_ps: 9_800,
        counts,
        fold_period_ps: None,
    }
}

pub fn folded(tags: &[TimeTag], period_ps: u64, offset_ps: u64, bin_ps: u64) -> Histogram {
    fold_histogram(tags, period_ps, offset_ps, bin_ps).expect("valid fold")
}
