use serde::{Deserialize, Serialize};
use std::f64::consts::PI;

use super::{mzi_output_powers, CouplerSpec, GratingCouplerSpec, MziSpec};
use crate::electrooptic::{phase_from_voltage, EomSpec};
use crate::error::{invalid, Result};

/// Default group index; reconciles the reported intrinsic Q with the
/// perimeter-weighted racetrack loss at 1550 nm.
pub const DEFAULT_GROUP_INDEX: f64 = 2.13;
/// Fringe period produced by the default arm imbalance at 1550 nm.
pub const DEFAULT_FRINGE_PERIOD_NM: f64 = 2.0;

/// The full device: input grating, MZI, two observation taps feeding Det1/Det2
/// and Out1/Out2, and the output gratings on Out1/Out2.
///
/// Topology is fixed: the MZI bar output feeds tap 1 (Det1, Out1) and the
/// cross output feeds tap 2 (Det2, Out2). Each tap sends its cross-port
/// fraction to the detector and the remainder to the observation port.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct CircuitSpec {
    pub grating_in: GratingCouplerSpec,
    pub grating_out: GratingCouplerSpec,
    pub mzi: MziSpec,
    pub tap_1: CouplerSpec,
    pub tap_2: CouplerSpec,
    pub group_index: f64,
}

/// Fractions of the launched power reaching each port.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct PortPowers {
    pub det1: f64,
    pub det2: f64,
    pub out1: f64,
    pub out2: f64,
}

impl PortPowers {
    pub fn total(&self) -> f64 {
        self.det1 + self.det2 + self.out1 + self.out2
    }

    pub fn lost(&self) -> f64 {
        (1.0 - self.total()).max(0.0)
    }

    pub fn scale(self, f: f64) -> Self {
        Self {
            det1: self.det1 * f,
            det2: self.det2 * f,
            out1: self.out1 * f,
            out2: self.out2 * f,
        }
    }
}

impl Default for CircuitSpec {
    fn default() -> Self {
        let lambda = 1550.0;
        let mut mzi = MziSpec::balanced(0.82);
        mzi.residual_opd_um = opd_for_fringe_period(lambda, DEFAULT_FRINGE_PERIOD_NM, DEFAULT_GROUP_INDEX);
        let half = CouplerSpec {
            split: 0.5,
            excess_loss_db: 0.0,
        };
        Self {
            grating_in: GratingCouplerSpec::default(),
            grating_out: GratingCouplerSpec::default(),
            mzi,
            tap_1: half,
            tap_2: half,
            group_index: DEFAULT_GROUP_INDEX,
        }
    }
}

/// Arm imbalance (μm) giving a fringe period `period_nm` near `lambda_nm`.
pub fn opd_for_fringe_period(lambda_nm: f64, period_nm: f64, group_index: f64) -> f64 {
    lambda_nm * lambda_nm / (group_index * period_nm) * 1e-3
}

impl CircuitSpec {
    pub fn validate(&self) -> Result<()> {
        self.grating_in.validate()?;
        self.grating_out.validate()?;
        self.mzi.validate()?;
        self.tap_1.validate()?;
        self.tap_2.validate()?;
        if !(self.group_index > 0.0) {
            return Err(invalid("group_index", "must be > 0"));
        }
        Ok(())
    }

    /// Phase from the arm imbalance at `lambda_nm`.
    pub fn static_phase(&self, lambda_nm: f64) -> f64 {
        2.0 * PI * self.group_index * self.mzi.residual_opd_um * 1e3 / lambda_nm
    }

    pub fn fringe_period_nm(&self, lambda_nm: f64) -> Option<f64> {
        (self.mzi.residual_opd_um != 0.0)
            .then(|| lambda_nm * lambda_nm / (self.group_index * self.mzi.residual_opd_um.abs() * 1e3))
    }

    /// Wavelength closest to `near_nm` whose static phase is `target` (mod 2π).
    ///
    /// Returns `None` without an arm imbalance, since the phase is then constant.
    pub fn wavelength_for_static_phase(&self, target: f64, near_nm: f64) -> Option<f64> {
        if self.mzi.residual_opd_um == 0.0 {
            return None;
        }
        let k = 2.0 * PI * self.group_index * self.mzi.residual_opd_um * 1e3;
        let m = ((k / near_nm - target) / (2.0 * PI)).round();
        Some(k / (target + 2.0 * PI * m))
    }

    /// Port fractions for unit power launched into the input grating.
    pub fn port_powers(&self, lambda_nm: f64, drive_phase: f64) -> PortPowers {
        let gin = self.grating_in.efficiency(lambda_nm);
        let gout = self.grating_out.efficiency(lambda_nm);
        let (bar, cross) = mzi_output_powers(&self.mzi, drive_phase + self.static_phase(lambda_nm));
        let (t1, t2) = (
            self.tap_1.amplitude_factor().powi(2),
            self.tap_2.amplitude_factor().powi(2),
        );
        PortPowers {
            det1: gin * bar * t1 * self.tap_1.split,
            det2: gin * cross * t2 * self.tap_2.split,
            out1: gin * bar * t1 * self.tap_1.through_fraction() * gout,
            out2: gin * cross * t2 * self.tap_2.through_fraction() * gout,
        }
    }

    /// Transmission from the input fiber to a detector when the MZI routes all
    /// its output light to that arm. This is the plane the photon flux is
    /// calibrated at.
    pub fn detector_plane_transmission(&self, lambda_nm: f64, detector: usize) -> f64 {
        let tap = if detector == 1 { &self.tap_1 } else { &self.tap_2 };
        self.grating_in.efficiency(lambda_nm) * self.mzi.transmission() * tap.amplitude_factor().powi(2) * tap.split
    }
}

/// Per-port transmission of the device at wavelength `lambda_nm` with `volts`
/// applied to the phase shifter.
pub fn device_spectrum(circuit: &CircuitSpec, eom: &EomSpec, lambda_nm: f64, volts: f64) -> PortPowers {
    circuit.port_powers(lambda_nm, phase_from_voltage(eom, volts))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::optics::db_to_linear;

    #[test]
    fn default_fringe_period() {
        let c = CircuitSpec::default();
        assert!((c.fringe_period_nm(1550.0).unwrap() - 2.0).abs() < 1e-12);
    }

    #[test]
    fn peak_transmission_product() {
        let mut c = CircuitSpec::default();
        let eom = EomSpec::cryo_dc();
        // align the bar fringe maximum (static phase pi) to the envelope centre
        c.mzi.residual_opd_um = 0.0;
        let lam = 1550.0;
        let p = c.port_powers(lam, std::f64::consts::PI);
        let expect = db_to_linear(4.5 + 4.5 + 0.82 + 3.0103);
        assert!((p.out1 / expect - 1.0).abs() < 1e-4, "{} vs {}", p.out1, expect);
        let v = device_spectrum(&c, &eom, lam, eom.v_pi_volts);
        assert!((v.out1 / expect - 1.0).abs() < 1e-4);
    }

    #[test]
    fn complementary_traces() {
        let c = CircuitSpec::default();
        let eom = EomSpec::cryo_dc();
        for i in 0..40 {
            let lam = 1548.0 + i as f64 * 0.1;
            let off = device_spectrum(&c, &eom, lam, 0.0);
            let on = device_spectrum(&c, &eom, lam, 16.5);
            assert!((off.out1 - on.out2).abs() < 1e-12);
            assert!((off.out2 - on.out1).abs() < 1e-12);
        }
    }

    #[test]
    fn no_imbalance_no_fringes() {
        let mut c = CircuitSpec::default();
        c.mzi.residual_opd_um = 0.0;
        let eom = EomSpec::cryo_dc();
        for i in 0..50 {
            let lam = 1530.0 + i as f64;
            let p = device_spectrum(&c, &eom, lam, 0.0);
            let env = c.grating_in.efficiency(lam) * c.grating_out.efficiency(lam);
            // pure Gaussian envelope: ratio to the envelope is constant
            assert!((p.out2 / env - 0.5 * db_to_linear(0.82)).abs() < 1e-12);
            assert!(p.out1.abs() < 1e-15);
        }
    }

    #[test]
    fn wavelength_for_phase() {
        let c = CircuitSpec::default();
        let lam = c.wavelength_for_static_phase(std::f64::consts::PI, 1550.0).unwrap();
        assert!((lam - 1550.0).abs() <= 1.0);
        let ph = c.static_phase(lam).rem_euclid(2.0 * PI);
        assert!((ph - PI).abs() < 1e-9);
    }

    #[test]
    fn power_budget_closes() {
        let c = CircuitSpec::default();
        for i in 0..30 {
            let p = c.port_powers(1540.0 + i as f64 * 0.7, 0.3 * i as f64);
            assert!(p.total() <= 1.0 && p.lost() >= 0.0);
        }
    }
}
