//! High-speed modulation: frequency response (fig5a) and folded modulation
//! visibility (fig5bc).

use anyhow::{anyhow, Context, Result};
use lnoi_core::analysis::modulation_visibility;
use lnoi_core::electrooptic::modulator_response;
use lnoi_core::timetag::fold_histogram;
use lnoi_core::{run_scenario, EomSpec};
use rayon::prelude::*;
use serde::Deserialize;

use super::{csv_table, histogram_csv, num, Outcome, Params};
use crate::report::Measurement;

/// Frequency at which the response first falls to `level`, interpolated
/// linearly in log frequency.
fn crossing(freqs: &[f64], response: &[f64], level: f64) -> Option<f64> {
    let i = response.iter().position(|&r| r < level)?;
    if i == 0 {
        return None;
    }
    let (f0, f1) = (freqs[i - 1].ln(), freqs[i].ln());
    let (r0, r1) = (response[i - 1], response[i]);
    Some((f0 + (level - r0) / (r1 - r0) * (f1 - f0)).exp())
}

pub(super) fn bandwidth(p: &Params) -> Result<Outcome> {
    let eom: EomSpec = p.get("eom")?;
    eom.validate()?;
    let from = p.f64("from_hz")?;
    let to = p.f64("to_hz")?;
    let points = p.u64("points")? as usize;
    let probe = p.f64("probe_hz")?;
    let freqs: Vec<f64> = (0..points)
        .map(|i| from * (to / from).powf(i as f64 / (points - 1).max(1) as f64))
        .collect();
    let response: Vec<f64> = freqs.iter().map(|&f| modulator_response(&eom, f)).collect();

    let mut o = Outcome::default();
    // −3 dB of the electro-optic S21 is |H| = 1/√2
    let m = match crossing(&freqs, &response, std::f64::consts::FRAC_1_SQRT_2) {
        Some(f) => {
            o.metric("f3db_ghz", f * 1e-9);
            Measurement::of(f * 1e-9)
        }
        None => Measurement::missing("response never falls by 3 dB inside the sweep"),
    };
    o.measure("f3db", m);
    let at_probe = modulator_response(&eom, probe);
    o.measure("response_at_probe", Measurement::of(at_probe));
    o.metric("response_at_probe", at_probe);
    let rows = freqs
        .iter()
        .zip(&response)
        .map(|(&f, &r)| [num(f), num(r), num(20.0 * r.log10())]);
    o.data(
        "data.csv",
        csv_table(["frequency_hz", "response", "response_db"], rows)?,
    );
    Ok(o)
}

#[derive(Deserialize)]
struct Run {
    name: String,
    frequency_hz: f64,
    bin_width_ps: u64,
}

pub(super) fn visibility(p: &Params) -> Result<Outcome> {
    let base = p.scenario("scenario")?;
    let runs: Vec<Run> = p.get("runs")?;
    let det = u32::from(base.source.reference_detector);
    let results = runs
        .par_iter()
        .enumerate()
        .map(|(k, r)| {
            let mut s = base.clone();
            s.drive.frequency_hz = r.frequency_hz;
            s.seed = s.seed.wrapping_add(k as u64);
            s.validate()?;
            let out = run_scenario(&s)?;
            let trig = out
                .trigger
                .ok_or_else(|| anyhow!("visibility needs a periodic drive"))?;
            let h = fold_histogram(out.detector_tags(det), trig.period_ps, trig.offset_ps, r.bin_width_ps)?;
            let v = modulation_visibility(&h);
            Ok::<_, anyhow::Error>((h, v, modulator_response(&s.eom, r.frequency_hz)))
        })
        .collect::<Vec<_>>();

    let mut o = Outcome::default();
    for (k, (r, res)) in runs.iter().zip(results).enumerate() {
        let (h, v, response) = res.with_context(|| format!("run {}", r.name))?;
        let name = if k == 0 {
            "data.csv".to_string()
        } else {
            format!("data_{}.csv", r.name)
        };
        o.data(&name, histogram_csv(&h));
        o.metric(&format!("response_{}", r.name), response);
        let m = match v {
            Ok(v) => {
                o.metric(&format!("visibility_{}", r.name), v.v_peak);
                o.metric(&format!("visibility_standard_{}", r.name), v.v_standard);
                Measurement::of(v.v_peak).with_counts(h.total() as f64)
            }
            Err(e) => Measurement::missing(format!("visibility failed: {e}")),
        };
        o.measure(&format!("visibility_{}", r.name), m);
    }
    Ok(o)
}
