//! Pockels phase shifter: voltage to phase, drive waveforms, the modulator's
//! frequency response and DC bias drift.

use serde::{Deserialize, Serialize};
use std::f64::consts::PI;

use crate::error::{invalid, Result};

/// Half-wave voltages measured for the three operating conditions.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OperatingCondition {
    RoomTemperatureAc,
    CryogenicAc,
    CryogenicDc,
}

impl OperatingCondition {
    pub fn v_pi_volts(self) -> f64 {
        match self {
            Self::RoomTemperatureAc => 15.5,
            Self::CryogenicAc => 17.8,
            Self::CryogenicDc => 16.5,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct EomSpec {
    pub v_pi_volts: f64,
    pub electrode_length_mm: f64,
    pub f3db_ghz: f64,
    /// Informational only.
    #[serde(default = "default_r33")]
    pub r33_pm_per_v: f64,
}

fn default_r33() -> f64 {
    30.0
}

impl EomSpec {
    pub fn for_condition(c: OperatingCondition) -> Self {
        Self {
            v_pi_volts: c.v_pi_volts(),
            electrode_length_mm: 1.7,
            f3db_ghz: 4.0,
            r33_pm_per_v: default_r33(),
        }
    }

    pub fn rt_ac() -> Self {
        Self::for_condition(OperatingCondition::RoomTemperatureAc)
    }

    pub fn cryo_ac() -> Self {
        Self::for_condition(OperatingCondition::CryogenicAc)
    }

    pub fn cryo_dc() -> Self {
        Self::for_condition(OperatingCondition::CryogenicDc)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.v_pi_volts > 0.0) || !self.v_pi_volts.is_finite() {
            return Err(invalid("v_pi_volts", "must be > 0"));
        }
        if !(self.electrode_length_mm > 0.0) {
            return Err(invalid("electrode_length_mm", "must be > 0"));
        }
        if !(self.f3db_ghz > 0.0) {
            return Err(invalid("f3db_ghz", "must be > 0"));
        }
        Ok(())
    }

    /// Voltage-length figure of merit in V·cm.
    pub fn v_pi_length_v_cm(&self) -> f64 {
        self.v_pi_volts * self.electrode_length_mm / 10.0
    }
}

/// Pockels phase, linear in the applied voltage.
pub fn phase_from_voltage(eom: &EomSpec, volts: f64) -> f64 {
    PI * volts / eom.v_pi_volts
}

/// First-order low-pass amplitude response `1/√(1+(f/f3dB)²)`.
pub fn modulator_response(eom: &EomSpec, f_hz: f64) -> f64 {
    let x = f_hz / (eom.f3db_ghz * 1e9);
    1.0 / (1.0 + x * x).sqrt()
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum WaveformKind {
    Dc,
    /// Rising sawtooth spanning `offset ± vpp/2` once per period.
    Ramp,
    Sine,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct DriveWaveform {
    pub kind: WaveformKind,
    #[serde(default)]
    pub vpp: f64,
    #[serde(default)]
    pub frequency_hz: f64,
    #[serde(default)]
    pub offset_volts: f64,
    #[serde(default)]
    pub phase_offset_rad: f64,
}

impl DriveWaveform {
    pub fn dc(volts: f64) -> Self {
        Self {
            kind: WaveformKind::Dc,
            vpp: 0.0,
            frequency_hz: 0.0,
            offset_volts: volts,
            phase_offset_rad: 0.0,
        }
    }

    pub fn ramp(vpp: f64, frequency_hz: f64) -> Self {
        Self {
            kind: WaveformKind::Ramp,
            vpp,
            frequency_hz,
            offset_volts: 0.0,
            phase_offset_rad: 0.0,
        }
    }

    pub fn sine(vpp: f64, frequency_hz: f64) -> Self {
        Self {
            kind: WaveformKind::Sine,
            vpp,
            frequency_hz,
            offset_volts: 0.0,
            phase_offset_rad: 0.0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.vpp >= 0.0) || !self.vpp.is_finite() {
            return Err(invalid("vpp", "must be finite and >= 0"));
        }
        if self.kind != WaveformKind::Dc && !(self.frequency_hz > 0.0 && self.frequency_hz.is_finite()) {
            return Err(invalid(
                "frequency_hz",
                "ramp and sine drives need a positive frequency",
            ));
        }
        if !self.offset_volts.is_finite() || !self.phase_offset_rad.is_finite() {
            return Err(invalid("offset_volts", "must be finite"));
        }
        Ok(())
    }

    pub fn is_periodic(&self) -> bool {
        self.kind != WaveformKind::Dc
    }

    /// Period in whole picoseconds when `1/f` is an integer number of ps.
    pub fn period_ps(&self) -> Option<u64> {
        if !self.is_periodic() {
            return None;
        }
        let p = 1e12 / self.frequency_hz;
        let r = p.round();
        (r >= 1.0 && (p - r).abs() <= 1e-6 * r.max(1.0)).then_some(r as u64)
    }

    /// Waveform value at a fractional position `x ∈ [0, 1)` of the period.
    fn at_fraction(&self, x: f64) -> f64 {
        let half = self.vpp / 2.0;
        match self.kind {
            WaveformKind::Dc => self.offset_volts,
            WaveformKind::Ramp => {
                let x = (x + self.phase_offset_rad / (2.0 * PI)).rem_euclid(1.0);
                self.offset_volts - half + self.vpp * x
            }
            WaveformKind::Sine => self.offset_volts + half * (2.0 * PI * x + self.phase_offset_rad).sin(),
        }
    }

    /// Voltage at time `t_s` (seconds).
    pub fn voltage_at(&self, t_s: f64) -> f64 {
        if !self.is_periodic() {
            return self.offset_volts;
        }
        self.at_fraction((t_s * self.frequency_hz).rem_euclid(1.0))
    }

    /// Voltage at an integer picosecond time. Uses exact modular arithmetic when
    /// the period is a whole number of picoseconds, so long runs do not drift.
    pub fn voltage_at_ps(&self, t_ps: u64) -> f64 {
        match self.period_ps() {
            Some(p) => self.at_fraction((t_ps % p) as f64 / p as f64),
            None => self.voltage_at(t_ps as f64 * 1e-12),
        }
    }
}

/// Time evolution of a DC bias after it is applied.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(tag = "mode", rename_all = "snake_case")]
pub enum DriftModel {
    #[default]
    CryoStable,
    /// Charge screening pulls the effective DC field back to zero.
    RtScreened { tau_screen_s: f64 },
}

impl DriftModel {
    pub const DEFAULT_TAU_SCREEN_S: f64 = 0.3;

    pub fn rt_default() -> Self {
        Self::RtScreened {
            tau_screen_s: Self::DEFAULT_TAU_SCREEN_S,
        }
    }

    pub fn validate(&self) -> Result<()> {
        match self {
            Self::RtScreened { tau_screen_s } if !(*tau_screen_s > 0.0) => Err(invalid("tau_screen_s", "must be > 0")),
            _ => Ok(()),
        }
    }
}

/// Effective DC voltage `t_s` seconds after `v_dc` was applied.
pub fn apply_dc_drift(d: &DriftModel, v_dc: f64, t_s: f64) -> f64 {
    match d {
        DriftModel::CryoStable => v_dc,
        DriftModel::RtScreened { tau_screen_s } => v_dc * (-t_s.max(0.0) / tau_screen_s).exp(),
    }
}

/// Drive as seen by the optical phase: DC part through the drift model, AC
/// part scaled by the modulator response at the drive frequency.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct EffectiveDrive {
    pub eom: EomSpec,
    pub waveform: DriveWaveform,
    pub drift: DriftModel,
    response: f64,
}

impl EffectiveDrive {
    pub fn new(eom: EomSpec, waveform: DriveWaveform, drift: DriftModel) -> Self {
        let response = if waveform.is_periodic() {
            modulator_response(&eom, waveform.frequency_hz)
        } else {
            1.0
        };
        Self {
            eom,
            waveform,
            drift,
            response,
        }
    }

    pub fn response(&self) -> f64 {
        self.response
    }

    pub fn voltage_at_ps(&self, t_ps: u64) -> f64 {
        let dc = apply_dc_drift(&self.drift, self.waveform.offset_volts, t_ps as f64 * 1e-12);
        let ac = self.waveform.voltage_at_ps(t_ps) - self.waveform.offset_volts;
        dc + ac * self.response
    }

    pub fn phase_at_ps(&self, t_ps: u64) -> f64 {
        phase_from_voltage(&self.eom, self.voltage_at_ps(t_ps))
    }

    /// True when the effective voltage cannot change with time.
    pub fn is_static(&self) -> bool {
        let ac_free = !self.waveform.is_periodic() || self.waveform.vpp == 0.0;
        let dc_stable = matches!(self.drift, DriftModel::CryoStable) || self.waveform.offset_volts == 0.0;
        ac_free && dc_stable
    }
}
