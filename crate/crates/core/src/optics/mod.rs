//! Passive optical circuit: couplers, the Mach-Zehnder interferometer, grating
//! couplers and resonator-based loss characterization.
//!
//! Conventions: a directional coupler with cross-port power fraction `S` has
//! the symmetric transfer matrix `[[t, iκ], [iκ, t]]` with `t = √(1−S)` and
//! `κ = √S`. Powers are linear fractions; losses are given in dB.

mod circuit;
mod resonator;

pub use circuit::{
    device_spectrum, opd_for_fringe_period, CircuitSpec, PortPowers, DEFAULT_FRINGE_PERIOD_NM, DEFAULT_GROUP_INDEX,
};
pub use resonator::{
    extract_segment_losses, infer_intrinsic_q, loss_from_intrinsic_q, q_from_loss, resonator_transmission,
    CouplingRegime, IntrinsicQEstimate, ResonatorGeometry, ResonatorKind, ResonatorSpec, SegmentLosses,
    CRITICAL_DIP_THRESHOLD,
};

use num_complex::Complex64;
use serde::{Deserialize, Serialize};
use std::f64::consts::LN_2;

use crate::error::{invalid, Result};

/// Linear power transmission for a loss given in dB.
#[inline]
pub fn db_to_linear(loss_db: f64) -> f64 {
    10f64.powf(-loss_db / 10.0)
}

/// Loss in dB for a linear power transmission.
#[inline]
pub fn linear_to_db(transmission: f64) -> f64 {
    -10.0 * transmission.log10()
}

/// Complex field amplitudes at a two-port reference plane.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct PortAmplitudes {
    pub bar: Complex64,
    pub cross: Complex64,
}

impl PortAmplitudes {
    pub fn new(bar: Complex64, cross: Complex64) -> Self {
        Self { bar, cross }
    }

    /// Unit power launched into the bar (upper) input.
    pub fn unit_bar() -> Self {
        Self::new(Complex64::new(1.0, 0.0), Complex64::new(0.0, 0.0))
    }

    pub fn powers(&self) -> (f64, f64) {
        (self.bar.norm_sqr(), self.cross.norm_sqr())
    }

    pub fn total_power(&self) -> f64 {
        self.bar.norm_sqr() + self.cross.norm_sqr()
    }

    /// Applies a phase shift to the bar arm only.
    pub fn phase_shift_bar(self, phi: f64) -> Self {
        Self::new(self.bar * Complex64::from_polar(1.0, phi), self.cross)
    }
}

/// 2×2 directional coupler. `split` is the cross-port power fraction.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct CouplerSpec {
    pub split: f64,
    #[serde(default)]
    pub excess_loss_db: f64,
}

impl CouplerSpec {
    pub fn new(split: f64, excess_loss_db: f64) -> Result<Self> {
        let c = Self { split, excess_loss_db };
        c.validate()?;
        Ok(c)
    }

    pub fn lossless(split: f64) -> Result<Self> {
        Self::new(split, 0.0)
    }

    pub fn validate(&self) -> Result<()> {
        if !(0.0..=1.0).contains(&self.split) {
            return Err(invalid("split", format!("{} not in [0, 1]", self.split)));
        }
        if !(self.excess_loss_db >= 0.0) || !self.excess_loss_db.is_finite() {
            return Err(invalid(
                "excess_loss_db",
                format!("{} must be finite and >= 0", self.excess_loss_db),
            ));
        }
        Ok(())
    }

    pub fn through_fraction(&self) -> f64 {
        1.0 - self.split
    }

    pub fn amplitude_factor(&self) -> f64 {
        10f64.powf(-self.excess_loss_db / 20.0)
    }
}

/// Propagates field amplitudes through a directional coupler.
pub fn coupler_transfer(c: &CouplerSpec, input: PortAmplitudes) -> PortAmplitudes {
    let t = Complex64::new((1.0 - c.split).sqrt(), 0.0);
    let k = Complex64::new(0.0, c.split.sqrt());
    let loss = c.amplitude_factor();
    PortAmplitudes::new(
        (t * input.bar + k * input.cross) * loss,
        (k * input.bar + t * input.cross) * loss,
    )
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SegmentKind {
    Straight,
    Bend,
}

/// A waveguide section with a uniform propagation loss.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct WaveguideSegment {
    pub length_cm: f64,
    pub loss_db_per_cm: f64,
    pub kind: SegmentKind,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub bend_radius_um: Option<f64>,
}

impl WaveguideSegment {
    pub fn straight(length_cm: f64, loss_db_per_cm: f64) -> Result<Self> {
        let s = Self {
            length_cm,
            loss_db_per_cm,
            kind: SegmentKind::Straight,
            bend_radius_um: None,
        };
        s.validate()?;
        Ok(s)
    }

    pub fn bend(length_cm: f64, loss_db_per_cm: f64, radius_um: f64) -> Result<Self> {
        let s = Self {
            length_cm,
            loss_db_per_cm,
            kind: SegmentKind::Bend,
            bend_radius_um: Some(radius_um),
        };
        s.validate()?;
        Ok(s)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.length_cm > 0.0) {
            return Err(invalid("length_cm", "must be > 0"));
        }
        if !(self.loss_db_per_cm >= 0.0) {
            return Err(invalid("loss_db_per_cm", "must be >= 0"));
        }
        if self.kind == SegmentKind::Bend && !matches!(self.bend_radius_um, Some(r) if r > 0.0) {
            return Err(invalid("bend_radius_um", "bend needs a positive radius"));
        }
        Ok(())
    }

    pub fn loss_db(&self) -> f64 {
        self.length_cm * self.loss_db_per_cm
    }

    /// Scales both field amplitudes by the segment's propagation loss.
    pub fn transfer(&self, input: PortAmplitudes) -> PortAmplitudes {
        let a = 10f64.powf(-self.loss_db() / 20.0);
        PortAmplitudes::new(input.bar * a, input.cross * a)
    }
}

/// Fiber-to-chip grating coupler with a Gaussian spectral envelope.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct GratingCouplerSpec {
    pub peak_efficiency_db: f64,
    pub center_wavelength_nm: f64,
    pub fwhm_bandwidth_nm: f64,
}

impl Default for GratingCouplerSpec {
    fn default() -> Self {
        Self {
            peak_efficiency_db: -4.5,
            center_wavelength_nm: 1550.0,
            fwhm_bandwidth_nm: 40.0,
        }
    }
}

impl GratingCouplerSpec {
    pub fn validate(&self) -> Result<()> {
        if !(self.peak_efficiency_db <= 0.0) {
            return Err(invalid("peak_efficiency_db", "must be <= 0"));
        }
        if !(self.fwhm_bandwidth_nm > 0.0) {
            return Err(invalid("fwhm_bandwidth_nm", "must be > 0"));
        }
        if !(self.center_wavelength_nm > 0.0) {
            return Err(invalid("center_wavelength_nm", "must be > 0"));
        }
        Ok(())
    }

    /// Linear power coupling efficiency at `lambda_nm`.
    pub fn efficiency(&self, lambda_nm: f64) -> f64 {
        let d = (lambda_nm - self.center_wavelength_nm) / self.fwhm_bandwidth_nm;
        10f64.powf(self.peak_efficiency_db / 10.0) * (-4.0 * LN_2 * d * d).exp()
    }
}

/// Mach-Zehnder interferometer: two couplers around a phase-controlled arm pair.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct MziSpec {
    pub coupler_1: CouplerSpec,
    pub coupler_2: CouplerSpec,
    pub insertion_loss_db: f64,
    /// Optical path imbalance between the arms, in micrometres.
    #[serde(default)]
    pub residual_opd_um: f64,
}

impl MziSpec {
    pub fn balanced(insertion_loss_db: f64) -> Self {
        Self::with_split(0.5, insertion_loss_db)
    }

    pub fn with_split(split: f64, insertion_loss_db: f64) -> Self {
        Self {
            coupler_1: CouplerSpec {
                split,
                excess_loss_db: 0.0,
            },
            coupler_2: CouplerSpec {
                split,
                excess_loss_db: 0.0,
            },
            insertion_loss_db,
            residual_opd_um: 0.0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.coupler_1.validate()?;
        self.coupler_2.validate()?;
        if !(self.insertion_loss_db >= 0.0) || !self.insertion_loss_db.is_finite() {
            return Err(invalid("insertion_loss_db", "must be finite and >= 0"));
        }
        if !self.residual_opd_um.is_finite() {
            return Err(invalid("residual_opd_um", "must be finite"));
        }
        Ok(())
    }

    /// Overall power transmission of the lossy parts (insertion loss and coupler excess loss).
    pub fn transmission(&self) -> f64 {
        db_to_linear(self.insertion_loss_db + self.coupler_1.excess_loss_db + self.coupler_2.excess_loss_db)
    }

    /// Field-level propagation with light launched on the given input plane.
    pub fn transfer(&self, phi: f64, input: PortAmplitudes) -> PortAmplitudes {
        let mid = coupler_transfer(&self.coupler_1, input).phase_shift_bar(phi);
        let out = coupler_transfer(&self.coupler_2, mid);
        let a = 10f64.powf(-self.insertion_loss_db / 20.0);
        PortAmplitudes::new(out.bar * a, out.cross * a)
    }
}

/// Closed-form `(P_bar, P_cross)` for unit power into the bar input.
pub fn mzi_output_powers(m: &MziSpec, phi: f64) -> (f64, f64) {
    let (t1, k1) = (1.0 - m.coupler_1.split, m.coupler_1.split);
    let (t2, k2) = (1.0 - m.coupler_2.split, m.coupler_2.split);
    let e = Complex64::from_polar(1.0, phi);
    let bar = e * (t1 * t2).sqrt() - (k1 * k2).sqrt();
    let cross = e * (t1 * k2).sqrt() + (k1 * t2).sqrt();
    let eta = m.transmission();
    (bar.norm_sqr() * eta, cross.norm_sqr() * eta)
}

/// Bar-port extinction `max/min` over φ for equal couplers, `1/(1−2S)²`.
pub fn equal_coupler_bar_extinction(split: f64) -> f64 {
    let d = 1.0 - 2.0 * split;
    1.0 / (d * d)
}
