use lnoi_core::analysis::{
    calibrate_photon_flux, fit_vpi_samples, modulation_visibility, photon_energy_j, CalibrationInputs,
};
use lnoi_core::optics::{
    coupler_transfer, db_to_linear, loss_from_intrinsic_q, mzi_output_powers, q_from_loss, resonator_transmission,
    CouplerSpec, MziSpec, PortAmplitudes, ResonatorKind, ResonatorSpec,
};
use lnoi_core::snspd::process_arrivals;
use lnoi_core::timetag::{encode_tags, fold_histogram, read_tags, Histogram, TimeTag};
use lnoi_core::{CounterRng, DetectorSpec, DriveWaveform};
use proptest::prelude::*;
use std::f64::consts::PI;

proptest! {
    #![proptest_config(ProptestConfig::with_cases(256))]

    #[test]
    fn lossless_chain_conserves_power(s1 in 0.0..=1.0f64, s2 in 0.0..=1.0f64, phi in -10.0..10.0f64) {
        let c1 = CouplerSpec::lossless(s1).unwrap();
        let c2 = CouplerSpec::lossless(s2).unwrap();
        let a = coupler_transfer(&c2, coupler_transfer(&c1, PortAmplitudes::unit_bar()).phase_shift_bar(phi));
        prop_assert!((a.total_power() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn lossy_chain_never_gains_power(
        s1 in 0.0..=1.0f64, s2 in 0.0..=1.0f64, x1 in 0.0..3.0f64, x2 in 0.0..3.0f64, phi in -10.0..10.0f64,
    ) {
        let c1 = CouplerSpec::new(s1, x1).unwrap();
        let c2 = CouplerSpec::new(s2, x2).unwrap();
        let a = coupler_transfer(&c2, coupler_transfer(&c1, PortAmplitudes::unit_bar()).phase_shift_bar(phi));
        prop_assert!(a.total_power() <= 1.0 + 1e-12);
    }

    #[test]
    fn mzi_outputs_sum_to_transmission(s1 in 0.0..=1.0f64, s2 in 0.0..=1.0f64, l in 0.0..5.0f64, phi in -10.0..10.0f64) {
        let mut m = MziSpec::balanced(l);
        m.coupler_1 = CouplerSpec::lossless(s1).unwrap();
        m.coupler_2 = CouplerSpec::lossless(s2).unwrap();
        let (bar, cross) = mzi_output_powers(&m, phi);
        prop_assert!((bar + cross - db_to_linear(l)).abs() < 1e-12);
    }

    #[test]
    fn equal_couplers_null_the_cross_port(s in 0.0..=1.0f64, l in 0.0..5.0f64) {
        let m = MziSpec::with_split(s, l);
        let (_, cross) = mzi_output_powers(&m, PI);
        prop_assert!(cross.abs() < 1e-15);
    }

    #[test]
    fn dead_time_spacing(gaps in prop::collection::vec(1u64..60_000, 1..400), seed in any::<u64>()) {
        let mut t = 0u64;
        let arrivals: Vec<u64> = gaps.iter().map(|g| { t += g; t }).collect();
        let mut d = DetectorSpec::det2();
        d.internal_eff_max = 1.0;
        d.dark_rate_cps = 1e6;
        let clicks = process_arrivals(&d, &arrivals, (0, t + 1), &CounterRng::new(seed), 2).unwrap();
        let dead = d.dead_time_ps();
        prop_assert!(clicks.windows(2).all(|w| w[1].true_arrival_ps - w[0].true_arrival_ps >= dead));
    }

    #[test]
    fn folding_conserves_counts_and_ignores_whole_periods(
        times in prop::collection::vec(0u64..10_000_000, 0..500),
        period in 200u64..50_000,
        width in 1u64..100,
        shift in 0u64..1000,
    ) {
        prop_assume!(period > width);
        let tags: Vec<TimeTag> = times.iter().map(|&t| TimeTag::new(1, t)).collect();
        let h = fold_histogram(&tags, period, 17, width).unwrap();
        prop_assert_eq!(h.total(), tags.len() as u64);
        let shifted: Vec<TimeTag> = tags.iter().map(|t| TimeTag::new(1, t.time_ps + shift * period)).collect();
        prop_assert_eq!(fold_histogram(&shifted, period, 17, width).unwrap(), h);
    }

    #[test]
    fn tag_records_round_trip(raw in prop::collection::vec((any::<u32>(), any::<u64>()), 0..200)) {
        let tags: Vec<TimeTag> = raw.iter().map(|&(c, t)| TimeTag::new(c, t)).collect();
        let bytes = encode_tags(&tags);
        prop_assert_eq!(bytes.len(), 12 * tags.len());
        prop_assert_eq!(read_tags(&bytes[..]).unwrap(), tags);
    }

    #[test]
    fn flux_formula_inverts_forward_model(
        eta_db in -8.0..-1.0f64, l_db in 0.0..3.0f64, s in 0.05..0.95f64, p_in in 1e-9..1e-3f64, lambda in 1500.0..1600.0f64,
    ) {
        let eta = db_to_linear(-eta_db);
        let l = db_to_linear(l_db);
        let p_out = p_in * eta * eta * l * (1.0 - s);
        let flux = p_in * eta * l * s / photon_energy_j(lambda);
        let cal = calibrate_photon_flux(&CalibrationInputs {
            p_in_watts: p_in, p_out_watts: p_out, l_transmission: l, s_split: s, wavelength_nm: lambda,
        }).unwrap();
        prop_assert!((cal.flux_photons_per_s / flux - 1.0).abs() < 1e-9);
        prop_assert!((cal.coupler_efficiency / eta - 1.0).abs() < 1e-9);
    }

    #[test]
    fn visibility_conventions_are_ordered(counts in prop::collection::vec(0u64..10_000, 20..60)) {
        let n = counts.len() as u64;
        let h = Histogram { bin_width_ps: 10, origin_ps: 0, counts, fold_period_ps: Some(10 * n) };
        if let Ok(v) = modulation_visibility(&h) {
            prop_assert!(v.v_standard <= v.v_peak + 1e-12);
            prop_assert!((0.0..=1.0).contains(&v.v_peak));
            prop_assert!((0.0..=1.0).contains(&v.v_standard));
        }
    }

    #[test]
    fn loss_and_q_invert(q in 1e4..1e8f64, lambda in 1000.0..2000.0f64, ng in 1.5..4.0f64) {
        let a = loss_from_intrinsic_q(q, lambda, ng).unwrap();
        prop_assert!((q_from_loss(a, lambda, ng).unwrap() / q - 1.0).abs() < 1e-12);
    }

    #[test]
    fn lorentzian_is_symmetric(qi in 1e5..5e6f64, qc in 1e5..5e6f64, delta in 0.0..0.05f64) {
        let r = ResonatorSpec {
            kind: ResonatorKind::Racetrack,
            bend_radius_um: 70.0,
            straight_arm_um: 500.0,
            group_index: 2.13,
            intrinsic_q: qi,
            coupling_q: qc,
            resonance_nm: 1550.0,
        };
        let a = resonator_transmission(&r, 1550.0 + delta);
        let b = resonator_transmission(&r, 1550.0 - delta);
        prop_assert!((a - b).abs() < 1e-12);
    }

    #[test]
    fn waveforms_repeat_every_period(vpp in 0.0..40.0f64, f in 1e3..2e9f64, t in 0.0..1e-3f64, n in 1u32..100, ramp: bool) {
        let w = if ramp { DriveWaveform::ramp(vpp, f) } else { DriveWaveform::sine(vpp, f) };
        let a = w.voltage_at(t);
        let b = w.voltage_at(t + n as f64 / f);
        // sawtooth jump: compare modulo the full swing when t sits on the edge
        let d = (a - b).abs();
        prop_assert!(d < 1e-6 * vpp.max(1.0) || (ramp && (d - vpp).abs() < 1e-6 * vpp.max(1.0)));
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn vpi_fit_ignores_count_scaling(scale in 0.01..100.0f64, phi0 in -3.0..3.0f64) {
        let samples: Vec<(f64, f64)> = (0..300)
            .map(|i| {
                let v = -10.0 + 20.0 * i as f64 / 300.0;
                (v, 500.0 * (1.0 + (PI * v / 17.8 + phi0).cos()) + 3.0 + (i % 7) as f64)
            })
            .collect();
        let scaled: Vec<(f64, f64)> = samples.iter().map(|&(v, c)| (v, c * scale)).collect();
        let a = fit_vpi_samples(&samples, 20.0, None).unwrap();
        let b = fit_vpi_samples(&scaled, 20.0, None).unwrap();
        prop_assert!((a.v_pi_volts - b.v_pi_volts).abs() < 1e-6 * a.v_pi_volts);
    }
}
