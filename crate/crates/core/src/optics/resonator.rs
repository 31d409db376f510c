use serde::{Deserialize, Serialize};
use std::f64::consts::{E, PI};

use crate::error::{invalid, Error, Result};

/// Dips shallower than this (on-resonance transmission) are not treated as critical.
pub const CRITICAL_DIP_THRESHOLD: f64 = 0.05;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ResonatorKind {
    Ring,
    Racetrack,
}

/// Bend radius and straight-arm length of a ring or racetrack cavity.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ResonatorGeometry {
    pub bend_radius_um: f64,
    pub straight_arm_um: f64,
}

impl ResonatorGeometry {
    pub fn ring(bend_radius_um: f64) -> Self {
        Self {
            bend_radius_um,
            straight_arm_um: 0.0,
        }
    }

    pub fn racetrack(bend_radius_um: f64, straight_arm_um: f64) -> Self {
        Self {
            bend_radius_um,
            straight_arm_um,
        }
    }

    pub fn bend_length_um(&self) -> f64 {
        2.0 * PI * self.bend_radius_um
    }

    pub fn straight_length_um(&self) -> f64 {
        2.0 * self.straight_arm_um
    }

    pub fn perimeter_um(&self) -> f64 {
        self.bend_length_um() + self.straight_length_um()
    }

    /// Perimeter-weighted propagation loss of the round trip.
    pub fn average_loss(&self, straight_db_per_cm: f64, bend_db_per_cm: f64) -> f64 {
        (self.straight_length_um() * straight_db_per_cm + self.bend_length_um() * bend_db_per_cm) / self.perimeter_um()
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ResonatorSpec {
    pub kind: ResonatorKind,
    pub bend_radius_um: f64,
    pub straight_arm_um: f64,
    pub group_index: f64,
    pub intrinsic_q: f64,
    /// `f64::INFINITY` describes a decoupled cavity.
    pub coupling_q: f64,
    pub resonance_nm: f64,
}

impl ResonatorSpec {
    pub fn validate(&self) -> Result<()> {
        if !(self.intrinsic_q > 0.0) {
            return Err(invalid("intrinsic_q", "must be > 0"));
        }
        if !(self.coupling_q > 0.0) {
            return Err(invalid("coupling_q", "must be > 0"));
        }
        if !(self.resonance_nm > 0.0) {
            return Err(invalid("resonance_nm", "must be > 0"));
        }
        if !(self.bend_radius_um > 0.0) {
            return Err(invalid("bend_radius_um", "must be > 0"));
        }
        match self.kind {
            ResonatorKind::Ring if self.straight_arm_um != 0.0 => {
                Err(invalid("straight_arm_um", "a ring has no straight arm"))
            }
            ResonatorKind::Racetrack if !(self.straight_arm_um > 0.0) => {
                Err(invalid("straight_arm_um", "a racetrack needs straight arms"))
            }
            _ => Ok(()),
        }
    }

    pub fn geometry(&self) -> ResonatorGeometry {
        ResonatorGeometry {
            bend_radius_um: self.bend_radius_um,
            straight_arm_um: self.straight_arm_um,
        }
    }

    pub fn loaded_q(&self) -> f64 {
        1.0 / (1.0 / self.intrinsic_q + 1.0 / self.coupling_q)
    }

    pub fn linewidth_nm(&self) -> f64 {
        self.resonance_nm / self.loaded_q()
    }

    /// On-resonance transmission of the all-pass cavity.
    pub fn min_transmission(&self) -> f64 {
        let (gi, gc) = (1.0 / self.intrinsic_q, 1.0 / self.coupling_q);
        let r = (gc - gi) / (gc + gi);
        r * r
    }
}

/// All-pass Lorentzian dip seen on the bus waveguide.
pub fn resonator_transmission(r: &ResonatorSpec, lambda_nm: f64) -> f64 {
    let x = 2.0 * (lambda_nm - r.resonance_nm) / r.linewidth_nm();
    1.0 - (1.0 - r.min_transmission()) / (1.0 + x * x)
}

const DB_PER_NEPER_POWER: f64 = 4.342_944_819_032_518; // 10·log10(e)

/// Propagation loss (dB/cm) implied by an intrinsic quality factor.
pub fn loss_from_intrinsic_q(q_i: f64, lambda_nm: f64, group_index: f64) -> Result<f64> {
    check_positive("intrinsic_q", q_i)?;
    check_positive("lambda_nm", lambda_nm)?;
    check_positive("group_index", group_index)?;
    let alpha_per_m = 2.0 * PI * group_index / (q_i * lambda_nm * 1e-9);
    debug_assert!((DB_PER_NEPER_POWER - 10.0 * E.log10()).abs() < 1e-15);
    Ok(alpha_per_m * DB_PER_NEPER_POWER / 100.0)
}

/// Inverse of [`loss_from_intrinsic_q`].
pub fn q_from_loss(alpha_db_per_cm: f64, lambda_nm: f64, group_index: f64) -> Result<f64> {
    check_positive("alpha_db_per_cm", alpha_db_per_cm)?;
    check_positive("lambda_nm", lambda_nm)?;
    check_positive("group_index", group_index)?;
    let alpha_per_m = alpha_db_per_cm * 100.0 / DB_PER_NEPER_POWER;
    Ok(2.0 * PI * group_index / (alpha_per_m * lambda_nm * 1e-9))
}

fn check_positive(field: &'static str, v: f64) -> Result<()> {
    if v > 0.0 && v.is_finite() {
        Ok(())
    } else {
        Err(invalid(field, format!("{v} must be positive and finite")))
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "regime", rename_all = "snake_case")]
pub enum CouplingRegime {
    Critical,
    /// Depth alone cannot tell under- from over-coupling; both candidates are reported.
    Ambiguous {
        under_coupled_qi: f64,
        over_coupled_qi: f64,
    },
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct IntrinsicQEstimate {
    /// Critical value, or the under-coupled candidate when ambiguous.
    pub intrinsic_q: f64,
    pub regime: CouplingRegime,
}

/// Intrinsic Q from the loaded Q and the dip depth.
pub fn infer_intrinsic_q(loaded_q: f64, min_transmission: f64) -> IntrinsicQEstimate {
    if min_transmission < CRITICAL_DIP_THRESHOLD {
        return IntrinsicQEstimate {
            intrinsic_q: 2.0 * loaded_q,
            regime: CouplingRegime::Critical,
        };
    }
    let r = min_transmission.clamp(0.0, 1.0).sqrt();
    let under = 2.0 * loaded_q / (1.0 + r);
    let over = if r < 1.0 {
        2.0 * loaded_q / (1.0 - r)
    } else {
        f64::INFINITY
    };
    IntrinsicQEstimate {
        intrinsic_q: under,
        regime: CouplingRegime::Ambiguous {
            under_coupled_qi: under,
            over_coupled_qi: over,
        },
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SegmentLosses {
    pub straight_db_per_cm: f64,
    pub bend_db_per_cm: f64,
}

/// Separates straight and bend loss from a ring and a racetrack sharing the bend radius.
///
/// The ring's loss is pure bend loss; the racetrack's is the perimeter-weighted
/// mix of both.
pub fn extract_segment_losses(
    q_ring: f64,
    q_racetrack: f64,
    ring: ResonatorGeometry,
    racetrack: ResonatorGeometry,
    lambda_nm: f64,
    group_index: f64,
) -> Result<SegmentLosses> {
    if !(racetrack.straight_arm_um > 0.0) {
        return Err(invalid("straight_arm_um", "racetrack needs straight arms"));
    }
    if ring.straight_arm_um != 0.0 {
        return Err(invalid("straight_arm_um", "ring must have no straight arm"));
    }
    let bend = loss_from_intrinsic_q(q_ring, lambda_nm, group_index)?;
    let average = loss_from_intrinsic_q(q_racetrack, lambda_nm, group_index)?;
    let straight =
        (average * racetrack.perimeter_um() - racetrack.bend_length_um() * bend) / racetrack.straight_length_um();
    if straight < 0.0 {
        return Err(Error::Inconsistent(format!(
            "negative straight loss {straight:.4} dB/cm: racetrack Q exceeds what the ring's bend loss allows"
        )));
    }
    Ok(SegmentLosses {
        straight_db_per_cm: straight,
        bend_db_per_cm: bend,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn racetrack(qi: f64, qc: f64) -> ResonatorSpec {
        ResonatorSpec {
            kind: ResonatorKind::Racetrack,
            bend_radius_um: 70.0,
            straight_arm_um: 500.0,
            group_index: 2.13,
            intrinsic_q: qi,
            coupling_q: qc,
            resonance_nm: 1550.0,
        }
    }

    #[test]
    fn critical_coupling() {
        let r = racetrack(1.04e6, 1.04e6);
        assert_eq!(r.min_transmission(), 0.0);
        assert!((r.loaded_q() - 5.2e5).abs() < 1e-6);
        assert!(resonator_transmission(&r, 1550.0).abs() < 1e-15);
        // 1550 / 5.2e5 nm = 2.98 pm
        assert!((r.linewidth_nm() - 2.980_769_230_769e-3).abs() < 1e-12);
        let half = resonator_transmission(&r, 1550.0 + r.linewidth_nm() / 2.0);
        assert!((half - 0.5).abs() < 1e-9);
    }

    #[test]
    fn decoupled_is_transparent() {
        let r = racetrack(1e6, f64::INFINITY);
        for d in [-1e-2, 0.0, 1e-3] {
            assert_eq!(resonator_transmission(&r, 1550.0 + d), 1.0);
        }
    }

    #[test]
    fn lorentzian_symmetry() {
        let r = racetrack(1e6, 3e6);
        for k in 1..50 {
            let d = k as f64 * 1e-4;
            let a = resonator_transmission(&r, 1550.0 + d);
            let b = resonator_transmission(&r, 1550.0 - d);
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn validation() {
        let mut r = racetrack(1e6, 1e6);
        assert!(r.validate().is_ok());
        r.kind = ResonatorKind::Ring;
        assert!(r.validate().is_err());
        r.straight_arm_um = 0.0;
        assert!(r.validate().is_ok());
        r.intrinsic_q = -1.0;
        assert!(r.validate().is_err());
    }

    #[test]
    fn loss_examples() {
        // 2x500 um straight + 2*pi*70 um bend weighted average of 0.22 and 0.68
        let g = ResonatorGeometry::racetrack(70.0, 500.0);
        let avg = g.average_loss(0.22, 0.68);
        assert!((avg - 0.360_5).abs() < 1e-3);
        let a = loss_from_intrinsic_q(1.04e6, 1550.0, 2.13).unwrap();
        assert!((a - avg).abs() < 2e-3, "{a} vs {avg}");

        let big = loss_from_intrinsic_q(1e15, 1550.0, 2.13).unwrap();
        assert!(big < 1e-9);
        let double = loss_from_intrinsic_q(1.04e6, 1550.0, 4.26).unwrap();
        assert!((double - 2.0 * a).abs() < 1e-14);

        assert!(loss_from_intrinsic_q(0.0, 1550.0, 2.1).is_err());
        assert!(loss_from_intrinsic_q(1e6, -1.0, 2.1).is_err());
        assert!(loss_from_intrinsic_q(1e6, 1550.0, 0.0).is_err());
    }

    #[test]
    fn q_loss_round_trip() {
        for q in [1e4, 3.3e5, 1.04e6, 7e7] {
            let a = loss_from_intrinsic_q(q, 1540.0, 2.2).unwrap();
            let back = q_from_loss(a, 1540.0, 2.2).unwrap();
            assert!(((back - q) / q).abs() < 1e-12);
        }
    }

    fn synth(straight: f64, bend: f64) -> (f64, f64) {
        let ring = ResonatorGeometry::ring(70.0);
        let rt = ResonatorGeometry::racetrack(70.0, 500.0);
        (
            q_from_loss(ring.average_loss(straight, bend), 1550.0, 2.13).unwrap(),
            q_from_loss(rt.average_loss(straight, bend), 1550.0, 2.13).unwrap(),
        )
    }

    #[test]
    fn segment_round_trips() {
        for (s, b) in [(0.22, 0.68), (0.20, 0.60), (0.4, 0.4)] {
            let (qr, qt) = synth(s, b);
            let got = extract_segment_losses(
                qr,
                qt,
                ResonatorGeometry::ring(70.0),
                ResonatorGeometry::racetrack(70.0, 500.0),
                1550.0,
                2.13,
            )
            .unwrap();
            assert!(((got.straight_db_per_cm - s) / s).abs() < 1e-9);
            assert!(((got.bend_db_per_cm - b) / b).abs() < 1e-9);
        }
    }

    #[test]
    fn inconsistent_segment_inputs() {
        // racetrack far better than the ring's bend loss allows
        let (qr, _) = synth(0.22, 0.68);
        let err = extract_segment_losses(
            qr,
            qr * 100.0,
            ResonatorGeometry::ring(70.0),
            ResonatorGeometry::racetrack(70.0, 500.0),
            1550.0,
            2.13,
        );
        assert!(matches!(err, Err(Error::Inconsistent(_))));
        let err = extract_segment_losses(
            qr,
            qr,
            ResonatorGeometry::ring(70.0),
            ResonatorGeometry::ring(70.0),
            1550.0,
            2.13,
        );
        assert!(err.is_err());
    }

    #[test]
    fn regime_inference() {
        let est = infer_intrinsic_q(5.2e5, 0.01);
        assert_eq!(est.regime, CouplingRegime::Critical);
        assert_eq!(est.intrinsic_q, 1.04e6);

        // undercoupled cavity Qi = 1e6, Qc = 3e6
        let r = racetrack(1e6, 3e6);
        let est = infer_intrinsic_q(r.loaded_q(), r.min_transmission());
        match est.regime {
            CouplingRegime::Ambiguous {
                under_coupled_qi,
                over_coupled_qi,
            } => {
                assert!((under_coupled_qi - 1e6).abs() < 1e-3);
                assert!((over_coupled_qi - 3e6).abs() < 1e-2);
            }
            _ => panic!("expected ambiguity"),
        }
    }
}
