//! Resonator Q and propagation loss (fig2a, fig2b) and MZI insertion loss (fig2c).

use anyhow::{Context, Result};
use lnoi_core::analysis::{fit_envelope_sinusoid_spectrum, fit_lorentzian_resonance, lorentzian_dip, ResonanceFit};
use lnoi_core::optics::{
    device_spectrum, extract_segment_losses, q_from_loss, resonator_transmission, ResonatorGeometry, ResonatorKind,
    ResonatorSpec, SegmentLosses,
};
use lnoi_core::rng::{streams, Stream};
use lnoi_core::{CircuitSpec, CounterRng, EomSpec};
use rand_distr::{Distribution, Poisson};

use super::{csv_table, num, Outcome, Params};
use crate::report::Measurement;

fn poisson(mean: f64, rng: &mut Stream) -> f64 {
    match Poisson::new(mean) {
        Ok(p) => p.sample(rng),
        Err(_) => 0.0,
    }
}

/// Transmission sampled over `span_lw` linewidths around resonance.
fn spectrum(r: &ResonatorSpec, points: usize, span_lw: f64) -> Vec<(f64, f64)> {
    let span = span_lw * r.linewidth_nm();
    let start = r.resonance_nm - span / 2.0;
    (0..points)
        .map(|i| {
            let l = start + span * i as f64 / (points - 1) as f64;
            (l, resonator_transmission(r, l))
        })
        .collect()
}

/// Photon counts per point for `counts` at full transmission, or the exact
/// expectation when `rng` is `None`.
fn counted(s: &[(f64, f64)], counts: f64, rng: Option<&mut Stream>) -> Vec<(f64, f64)> {
    match rng {
        Some(rng) => s.iter().map(|&(l, t)| (l, poisson(t * counts, rng))).collect(),
        None => s.iter().map(|&(l, t)| (l, t * counts)).collect(),
    }
}

fn critically_coupled(kind: ResonatorKind, geometry: ResonatorGeometry, base: &ResonatorSpec, q: f64) -> ResonatorSpec {
    ResonatorSpec {
        kind,
        bend_radius_um: geometry.bend_radius_um,
        straight_arm_um: geometry.straight_arm_um,
        intrinsic_q: q,
        coupling_q: q,
        ..*base
    }
}

/// Fits ring and racetrack spectra, then splits their loss into straight and bend parts.
fn separate_losses(
    ring: &ResonatorSpec,
    race: &ResonatorSpec,
    points: usize,
    span_lw: f64,
    counts: f64,
    mut rng: Option<&mut Stream>,
) -> Result<SegmentLosses> {
    let mut qi = [0.0; 2];
    for (k, r) in [ring, race].into_iter().enumerate() {
        let s = counted(&spectrum(r, points, span_lw), counts, rng.as_deref_mut());
        qi[k] = fit_lorentzian_resonance(&s)?.intrinsic.intrinsic_q;
    }
    Ok(extract_segment_losses(
        qi[0],
        qi[1],
        ring.geometry(),
        race.geometry(),
        race.resonance_nm,
        race.group_index,
    )?)
}

pub(super) fn resonance(p: &Params) -> Result<Outcome> {
    let r: ResonatorSpec = p.get("resonator")?;
    r.validate()?;
    let points = p.u64("points")? as usize;
    let span = p.f64("span_linewidths")?;
    let counts = p.f64("counts_per_point")?;
    let rng = CounterRng::new(p.seed()?);
    let mut o = Outcome::default();

    let measured = counted(
        &spectrum(&r, points, span),
        counts,
        Some(&mut rng.stream(streams::SYNTHETIC)),
    );
    let fit: ResonanceFit = fit_lorentzian_resonance(&measured).context("fitting the racetrack resonance")?;
    o.measure("loaded_q", Measurement::against(fit.loaded_q, r.loaded_q()));
    o.measure("intrinsic_q", Measurement::of(fit.intrinsic.intrinsic_q));
    o.metric("loaded_q", fit.loaded_q);
    o.metric("intrinsic_q", fit.intrinsic.intrinsic_q);
    o.metric("min_transmission", fit.min_transmission);
    o.metric("lambda0_nm", fit.lambda0_nm);
    let baseline = fit.fit.param("baseline");
    let rows = measured.iter().map(|&(l, c)| {
        let model = lorentzian_dip(l, fit.lambda0_nm, fit.loaded_q, fit.min_transmission, baseline);
        [num(l), num(c), num(model)]
    });
    o.data("data.csv", csv_table(["wavelength_nm", "counts", "fit_counts"], rows)?);
    o.fit("resonance", fit.fit);

    let ls = "loss_separation";
    let straight = p.f64(&format!("{ls}.straight_db_per_cm"))?;
    let bend = p.f64(&format!("{ls}.bend_db_per_cm"))?;
    let radius = p.f64(&format!("{ls}.bend_radius_um"))?;
    let arm = p.f64(&format!("{ls}.straight_arm_um"))?;
    let sep_counts = p.f64(&format!("{ls}.counts_per_point"))?;
    let ring_geom = ResonatorGeometry::ring(radius);
    let race_geom = ResonatorGeometry::racetrack(radius, arm);
    let q_ring = q_from_loss(bend, r.resonance_nm, r.group_index)?;
    let q_race = q_from_loss(race_geom.average_loss(straight, bend), r.resonance_nm, r.group_index)?;
    let ring = critically_coupled(ResonatorKind::Ring, ring_geom, &r, q_ring);
    let race = critically_coupled(ResonatorKind::Racetrack, race_geom, &r, q_race);

    let exact = separate_losses(&ring, &race, points, span, sep_counts, None).context("noiseless loss separation")?;
    let noisy = separate_losses(
        &ring,
        &race,
        points,
        span,
        sep_counts,
        Some(&mut rng.stream(streams::SYNTHETIC + 1)),
    )
    .context("loss separation with shot noise")?;
    o.measure("straight_loss_noiseless", Measurement::of(exact.straight_db_per_cm));
    o.measure("bend_loss_noiseless", Measurement::of(exact.bend_db_per_cm));
    o.measure("straight_loss_shot_noise", Measurement::of(noisy.straight_db_per_cm));
    o.measure("bend_loss_shot_noise", Measurement::of(noisy.bend_db_per_cm));
    o.metric("ring_intrinsic_q", q_ring);
    o.metric("racetrack_intrinsic_q", q_race);
    o.data(
        "data_loss_separation.csv",
        csv_table(
            [
                "segment",
                "configured_db_per_cm",
                "noiseless_db_per_cm",
                "shot_noise_db_per_cm",
            ],
            [
                [
                    "straight".into(),
                    num(straight),
                    num(exact.straight_db_per_cm),
                    num(noisy.straight_db_per_cm),
                ],
                [
                    "bend".into(),
                    num(bend),
                    num(exact.bend_db_per_cm),
                    num(noisy.bend_db_per_cm),
                ],
            ],
        )?,
    );
    Ok(o)
}

pub(super) fn insertion_loss(p: &Params) -> Result<Outcome> {
    let c: CircuitSpec = p.get("circuit")?;
    c.validate()?;
    let start = p.f64("wavelength_start_nm")?;
    let stop = p.f64("wavelength_stop_nm")?;
    let points = p.u64("points")? as usize;
    let peak_counts = p.f64("peak_counts")?;
    let grid: Vec<f64> = (0..points)
        .map(|i| start + (stop - start) * i as f64 / (points - 1).max(1) as f64)
        .collect();

    // the reference structure has both gratings and the observation tap but no MZI
    let tap = c.tap_2.amplitude_factor().powi(2) * c.tap_2.through_fraction();
    let reference: Vec<f64> = grid
        .iter()
        .map(|&l| c.grating_in.efficiency(l) * c.grating_out.efficiency(l) * tap)
        .collect();
    let eom = EomSpec::cryo_dc();
    let device: Vec<f64> = grid.iter().map(|&l| device_spectrum(&c, &eom, l, 0.0).out2).collect();
    let scale = peak_counts / reference.iter().copied().fold(0.0, f64::max);

    let rng = CounterRng::new(p.seed()?);
    let mut st = rng.stream(streams::SYNTHETIC);
    let ref_counts: Vec<(f64, f64)> = grid
        .iter()
        .zip(&reference)
        .map(|(&l, &t)| (l, poisson(t * scale, &mut st)))
        .collect();
    let mut st = rng.stream(streams::SYNTHETIC + 1);
    let dev_counts: Vec<(f64, f64)> = grid
        .iter()
        .zip(&device)
        .map(|(&l, &t)| (l, poisson(t * scale, &mut st)))
        .collect();

    let fit = fit_envelope_sinusoid_spectrum(&ref_counts, &dev_counts).context("fitting the envelopes")?;
    let mut o = Outcome::default();
    o.measure("insertion_loss", Measurement::of(fit.insertion_loss_db));
    o.metric("insertion_loss_db", fit.insertion_loss_db);
    o.metric("fringe_period_nm", fit.fringe_period_nm);
    o.metric("fringe_visibility", fit.fringe_visibility);
    let rows = ref_counts
        .iter()
        .zip(&dev_counts)
        .map(|(&(l, r), &(_, d))| [num(l), num(r), num(d)]);
    o.data(
        "data.csv",
        csv_table(["wavelength_nm", "reference_counts", "device_counts"], rows)?,
    );
    o.fit("reference_envelope", fit.reference.fit);
    o.fit("device_envelope", fit.device.fit);
    Ok(o)
}
