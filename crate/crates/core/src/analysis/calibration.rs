use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};

pub const PLANCK_J_S: f64 = 6.626_070_15e-34;
pub const SPEED_OF_LIGHT_M_S: f64 = 299_792_458.0;

/// Photon energy `h·c/λ` in joules.
pub fn photon_energy_j(lambda_nm: f64) -> f64 {
    PLANCK_J_S * SPEED_OF_LIGHT_M_S / (lambda_nm * 1e-9)
}

/// Power-meter readings used to infer the photon flux at a detector input.
///
/// `p_in_watts` is launched into the input grating, `p_out_watts` is read at
/// the observation port while the MZI routes all light to that arm,
/// `l_transmission` is the MZI's linear transmission and `s_split` the tap
/// fraction sent to the detector.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct CalibrationInputs {
    pub p_in_watts: f64,
    pub p_out_watts: f64,
    pub l_transmission: f64,
    pub s_split: f64,
    pub wavelength_nm: f64,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct FluxCalibration {
    pub flux_photons_per_s: f64,
    /// Per-grating efficiency implied by the readings (linear).
    pub coupler_efficiency: f64,
}

/// `Φ = (λ/(h·c))·√(P_in·P_out·L/(1−S))·S`, assuming identical input and output gratings.
pub fn calibrate_photon_flux(c: &CalibrationInputs) -> Result<FluxCalibration> {
    if c.s_split >= 1.0 {
        return Err(invalid("s_split", "S = 1 leaves no light at the observation port"));
    }
    if !(c.s_split > 0.0) {
        return Err(invalid("s_split", "must be > 0"));
    }
    if !(c.p_in_watts > 0.0) {
        return Err(invalid("p_in_watts", "must be > 0"));
    }
    if !(c.p_out_watts >= 0.0) {
        return Err(invalid("p_out_watts", "must be >= 0"));
    }
    if !(c.l_transmission > 0.0 && c.l_transmission <= 1.0) {
        return Err(invalid("l_transmission", "must be in (0, 1]"));
    }
    if !(c.wavelength_nm > 0.0) {
        return Err(invalid("wavelength_nm", "must be > 0"));
    }
    let one_minus_s = 1.0 - c.s_split;
    let power = (c.p_in_watts * c.p_out_watts * c.l_transmission / one_minus_s).sqrt() * c.s_split;
    Ok(FluxCalibration {
        flux_photons_per_s: power / photon_energy_j(c.wavelength_nm),
        coupler_efficiency: (c.p_out_watts / (c.p_in_watts * c.l_transmission * one_minus_s)).sqrt(),
    })
}

/// On/off ratio in dB; infinite when `p_off` is zero.
pub fn extinction_db(p_on: f64, p_off: f64) -> Result<f64> {
    if !(p_on > 0.0) {
        return Err(invalid("p_on", "must be > 0"));
    }
    if !(p_off >= 0.0) {
        return Err(invalid("p_off", "must be >= 0"));
    }
    Ok(10.0 * (p_on / p_off).log10())
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", content = "db", rename_all = "snake_case")]
pub enum Extinction {
    Measured(f64),
    /// The off state is indistinguishable from the dark-count floor.
    LowerBound(f64),
}

impl Extinction {
    pub fn db(&self) -> f64 {
        match *self {
            Self::Measured(d) | Self::LowerBound(d) => d,
        }
    }

    pub fn is_lower_bound(&self) -> bool {
        matches!(self, Self::LowerBound(_))
    }
}

impl std::fmt::Display for Extinction {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Self::Measured(d) => write!(f, "{d:.2} dB"),
            Self::LowerBound(d) => write!(f, "> {d:.2} dB"),
        }
    }
}

/// Extinction from integrated counts. When the off counts do not exceed the
/// dark floor (expected dark counts plus three Poisson standard deviations,
/// at least one count), only a lower bound `on / floor` is reported.
pub fn extinction_from_counts(on_counts: f64, off_counts: f64, expected_dark_counts: f64) -> Result<Extinction> {
    let floor = (expected_dark_counts + 3.0 * expected_dark_counts.max(0.0).sqrt()).max(1.0);
    if off_counts <= floor {
        return Ok(Extinction::LowerBound(extinction_db(on_counts, floor)?));
    }
    Ok(Extinction::Measured(extinction_db(on_counts, off_counts)?))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn extinction_examples() {
        assert!((extinction_db(1000.0, 1.0).unwrap() - 30.0).abs() < 1e-12);
        assert_eq!(extinction_db(1.0, 0.0).unwrap(), f64::INFINITY);
        assert!(extinction_db(0.0, 1.0).is_err());
        // bar port of an S = 0.56 MZI: 1 / 0.12^2
        let e = extinction_db(1.0, 0.0144).unwrap();
        assert!((e - 18.416).abs() < 1e-3);
    }

    #[test]
    fn dark_floor_gives_lower_bound() {
        // 2 cps over 100 ms
        let e = extinction_from_counts(26_000.0, 0.0, 0.2).unwrap();
        assert!(e.is_lower_bound());
        assert!(e.db() > 30.0);
        let m = extinction_from_counts(24_000.0, 350.0, 0.2).unwrap();
        assert!(!m.is_lower_bound());
        assert!(format!("{e}").starts_with("> "));
    }

    #[test]
    fn flux_examples() {
        let base = CalibrationInputs {
            p_in_watts: 1e-9,
            p_out_watts: 0.0,
            l_transmission: 0.83,
            s_split: 0.5,
            wavelength_nm: 1550.0,
        };
        assert_eq!(calibrate_photon_flux(&base).unwrap().flux_photons_per_s, 0.0);
        let mut a = base;
        a.p_out_watts = 1e-10;
        let mut b = a;
        b.p_in_watts *= 2.0;
        b.p_out_watts *= 2.0;
        let fa = calibrate_photon_flux(&a).unwrap().flux_photons_per_s;
        let fb = calibrate_photon_flux(&b).unwrap().flux_photons_per_s;
        assert!((fb / fa - 2.0).abs() < 1e-14);
        let mut s1 = a;
        s1.s_split = 1.0;
        assert!(calibrate_photon_flux(&s1).is_err());
    }
}
