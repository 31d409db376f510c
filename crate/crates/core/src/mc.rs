//! Seeded photon Monte Carlo: arrival generation, quasi-static routing through
//! the circuit and full scenario runs producing tag streams.
//!
//! Each photon sees the modulator phase frozen at its arrival time (transit
//! through the 1.7 mm phase shifter takes ~13 ps, far below the shortest drive
//! period). Routing draws come from a counter generator indexed by photon
//! number, so a run is a pure function of the scenario.

use rand_distr::{Distribution, Exp, Normal, Poisson};
use serde::{Deserialize, Serialize};

use crate::analysis::photon_energy_j;
use crate::electrooptic::{apply_dc_drift, phase_from_voltage, DriftModel, DriveWaveform, EffectiveDrive, EomSpec};
use crate::error::{invalid, Error, Result};
use crate::optics::{mzi_output_powers, CircuitSpec, PortPowers};
use crate::rng::{streams, CounterRng, Stream};
use crate::snspd::{process_arrivals, DetectorSpec};
use crate::timetag::{
    PeriodicTrain, TagMerge, TimeTag, DET1_CHANNEL, DET2_CHANNEL, LASER_REF_CHANNEL, TRIGGER_CHANNEL,
};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SourceKind {
    Cw,
    Pulsed,
}

/// Where the configured photon flux is defined.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ReferencePlane {
    /// Photons per second in the fiber at the input grating.
    #[default]
    ChipInput,
    /// Photons per second at the input of `reference_detector` when the MZI
    /// routes all light towards it.
    DetectorInput,
}

fn default_reference_detector() -> u8 {
    1
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SourceSpec {
    pub kind: SourceKind,
    pub wavelength_nm: f64,
    #[serde(default)]
    pub flux_photons_per_s: f64,
    #[serde(default)]
    pub reference_plane: ReferencePlane,
    #[serde(default = "default_reference_detector")]
    pub reference_detector: u8,
    #[serde(default)]
    pub rep_rate_hz: f64,
    #[serde(default)]
    pub mean_photons_per_pulse: f64,
    #[serde(default)]
    pub pulse_sigma_ps: f64,
    /// Cable delay of the laser's electrical reference output.
    #[serde(default)]
    pub reference_delay_ps: u64,
}

impl SourceSpec {
    pub fn cw(flux_photons_per_s: f64, wavelength_nm: f64) -> Self {
        Self {
            kind: SourceKind::Cw,
            wavelength_nm,
            flux_photons_per_s,
            reference_plane: ReferencePlane::ChipInput,
            reference_detector: default_reference_detector(),
            rep_rate_hz: 0.0,
            mean_photons_per_pulse: 0.0,
            pulse_sigma_ps: 0.0,
            reference_delay_ps: 0,
        }
    }

    pub fn pulsed(rep_rate_hz: f64, mean_photons_per_pulse: f64, pulse_sigma_ps: f64, wavelength_nm: f64) -> Self {
        Self {
            kind: SourceKind::Pulsed,
            rep_rate_hz,
            mean_photons_per_pulse,
            pulse_sigma_ps,
            ..Self::cw(0.0, wavelength_nm)
        }
    }

    /// Declares the flux as measured at the input of `detector` (1 or 2).
    pub fn at_detector(mut self, detector: u8) -> Self {
        self.reference_plane = ReferencePlane::DetectorInput;
        self.reference_detector = detector;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.wavelength_nm > 0.0 && self.wavelength_nm.is_finite()) {
            return Err(invalid("source.wavelength_nm", "must be > 0"));
        }
        if !(1..=2).contains(&self.reference_detector) {
            return Err(invalid("source.reference_detector", "must be 1 or 2"));
        }
        match self.kind {
            SourceKind::Cw => {
                if !(self.flux_photons_per_s > 0.0 && self.flux_photons_per_s.is_finite()) {
                    return Err(invalid("source.flux_photons_per_s", "must be > 0"));
                }
            }
            SourceKind::Pulsed => {
                if !(self.rep_rate_hz > 0.0 && self.rep_rate_hz <= 1e12) {
                    return Err(invalid("source.rep_rate_hz", "must be in (0, 1e12]"));
                }
                if !(self.mean_photons_per_pulse >= 0.0 && self.mean_photons_per_pulse.is_finite()) {
                    return Err(invalid("source.mean_photons_per_pulse", "must be >= 0"));
                }
                if !(self.pulse_sigma_ps >= 0.0) {
                    return Err(invalid("source.pulse_sigma_ps", "must be >= 0"));
                }
                // photons of neighbouring pulses must not overlap for per-pulse sorting
                if self.pulse_sigma_ps * 16.0 > self.pulse_period_ps() as f64 {
                    return Err(invalid(
                        "source.pulse_sigma_ps",
                        "must be below 1/16 of the pulse period",
                    ));
                }
            }
        }
        Ok(())
    }

    pub fn pulse_period_ps(&self) -> u64 {
        (1e12 / self.rep_rate_hz).round() as u64
    }

    /// Mean photon rate in photons per second at the declared plane.
    pub fn mean_rate(&self) -> f64 {
        match self.kind {
            SourceKind::Cw => self.flux_photons_per_s,
            SourceKind::Pulsed => self.mean_photons_per_pulse * 1e12 / self.pulse_period_ps() as f64,
        }
    }
}

/// Arrival process with its parameters already resolved to one plane.
#[derive(Clone, Copy, Debug, PartialEq)]
enum Process {
    Cw { rate_per_s: f64 },
    Pulsed { period_ps: u64, mean: f64, sigma_ps: f64 },
}

impl Process {
    fn of(src: &SourceSpec, scale: f64) -> Self {
        match src.kind {
            SourceKind::Cw => Self::Cw {
                rate_per_s: src.flux_photons_per_s * scale,
            },
            SourceKind::Pulsed => Self::Pulsed {
                period_ps: src.pulse_period_ps(),
                mean: src.mean_photons_per_pulse * scale,
                sigma_ps: src.pulse_sigma_ps,
            },
        }
    }
}

/// Sorted photon arrival times in `[0, end_ps)`, generated lazily.
struct Arrivals {
    process: Process,
    end_ps: u64,
    main: Stream,
    shape: Stream,
    // CW state
    t: f64,
    // pulsed state
    next_pulse: u64,
    pending: Vec<u64>,
    pending_pos: usize,
    done: bool,
}

impl Arrivals {
    fn new(process: Process, end_ps: u64, rng: &CounterRng) -> Self {
        let empty = match process {
            Process::Cw { rate_per_s } => !(rate_per_s > 0.0),
            Process::Pulsed { mean, .. } => !(mean > 0.0),
        };
        Self {
            process,
            end_ps,
            main: rng.stream(streams::ARRIVALS),
            shape: rng.stream(streams::PULSE_SHAPE),
            t: 0.0,
            next_pulse: 0,
            pending: Vec::new(),
            pending_pos: 0,
            done: empty || end_ps == 0,
        }
    }

    /// Photon count of a pulse known to be non-empty (zero-truncated Poisson).
    fn nonempty_count(&mut self, mean: f64) -> u64 {
        if mean > 10.0 {
            let p = Poisson::new(mean).expect("positive mean");
            loop {
                let n: f64 = p.sample(&mut self.main);
                if n >= 1.0 {
                    return n as u64;
                }
            }
        }
        let u = self.main.next_f64() * -(-mean).exp_m1();
        let mut term = (-mean).exp() * mean;
        let mut acc = term;
        let mut n = 1u64;
        while acc < u && n < 1000 {
            n += 1;
            term *= mean / n as f64;
            acc += term;
        }
        n
    }

    fn refill_pulsed(&mut self, period_ps: u64, mean: f64, sigma_ps: f64) -> bool {
        // number of empty pulses before the next occupied one is geometric
        let p_occupied = -(-mean).exp_m1();
        let skip = if p_occupied >= 1.0 {
            0
        } else {
            let u = 1.0 - self.main.next_f64();
            (u.ln() / (-mean)).floor() as u64
        };
        let k = self.next_pulse.saturating_add(skip);
        let Some(slot) = k.checked_mul(period_ps).filter(|&s| s < self.end_ps) else {
            return false;
        };
        self.next_pulse = k + 1;
        let n = self.nonempty_count(mean);
        self.pending.clear();
        self.pending_pos = 0;
        let shape = Normal::new(0.0, sigma_ps).expect("valid sigma");
        for _ in 0..n {
            let dt: f64 = if sigma_ps > 0.0 {
                shape.sample(&mut self.shape)
            } else {
                0.0
            };
            let t = (slot as f64 + dt).round().max(0.0) as u64;
            if t < self.end_ps {
                self.pending.push(t);
            }
        }
        self.pending.sort_unstable();
        true
    }
}

impl Iterator for Arrivals {
    type Item = u64;

    fn next(&mut self) -> Option<u64> {
        if self.done {
            return None;
        }
        match self.process {
            Process::Cw { rate_per_s } => {
                let gap = Exp::new(rate_per_s * 1e-12).expect("positive rate");
                self.t += gap.sample(&mut self.main);
                if self.t >= self.end_ps as f64 {
                    self.done = true;
                    return None;
                }
                Some(self.t as u64)
            }
            Process::Pulsed {
                period_ps,
                mean,
                sigma_ps,
            } => loop {
                if self.pending_pos < self.pending.len() {
                    self.pending_pos += 1;
                    return Some(self.pending[self.pending_pos - 1]);
                }
                if !self.refill_pulsed(period_ps, mean, sigma_ps) {
                    self.done = true;
                    return None;
                }
            },
        }
    }
}

fn duration_to_ps(duration_s: f64) -> Result<u64> {
    if !(duration_s > 0.0 && duration_s.is_finite()) {
        return Err(invalid("duration_s", "must be > 0"));
    }
    let ps = duration_s * 1e12;
    if ps >= u64::MAX as f64 / 2.0 {
        return Err(invalid("duration_s", "too long for the picosecond timebase"));
    }
    Ok(ps.round().max(1.0) as u64)
}

/// Photon arrival times of `src` at its declared plane over `duration_s`.
///
/// CW light is a homogeneous Poisson process; a pulsed source emits a
/// Poisson number of photons per pulse, each offset by a Gaussian of width
/// `pulse_sigma_ps` around the pulse slot `k·period`.
pub fn generate_arrivals(src: &SourceSpec, duration_s: f64, seed: u64) -> Result<Vec<u64>> {
    src.validate()?;
    let end = duration_to_ps(duration_s)?;
    Ok(Arrivals::new(Process::of(src, 1.0), end, &CounterRng::new(seed)).collect())
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Destination {
    Det1,
    Det2,
    Out1,
    Out2,
    Lost,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum SimMode {
    /// Photons are simulated one at a time.
    #[default]
    PerPhoton,
    /// Counts per bin are drawn from the expected click rate in that bin.
    /// Produces per-bin counts only, no individual tags.
    Binned { bin_width_s: f64 },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Scenario {
    pub circuit: CircuitSpec,
    pub source: SourceSpec,
    pub eom: EomSpec,
    pub drive: DriveWaveform,
    #[serde(default)]
    pub drift: DriftModel,
    pub detectors: [DetectorSpec; 2],
    pub duration_s: f64,
    pub seed: u64,
    /// When set, the laser is tuned to the wavelength nearest
    /// `source.wavelength_nm` at which the arm imbalance alone gives this phase.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub operating_phase_rad: Option<f64>,
    #[serde(default)]
    pub mode: SimMode,
}

impl Scenario {
    /// Cryogenic default device under CW light with no drive applied.
    pub fn new(source: SourceSpec, duration_s: f64, seed: u64) -> Self {
        Self {
            circuit: CircuitSpec::default(),
            source,
            eom: EomSpec::cryo_dc(),
            drive: DriveWaveform::dc(0.0),
            drift: DriftModel::CryoStable,
            detectors: [DetectorSpec::det1(), DetectorSpec::det2()],
            duration_s,
            seed,
            operating_phase_rad: None,
            mode: SimMode::PerPhoton,
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.circuit.validate()?;
        self.source.validate()?;
        self.eom.validate()?;
        self.drive.validate()?;
        self.drift.validate()?;
        for d in &self.detectors {
            d.validate()?;
        }
        duration_to_ps(self.duration_s)?;
        if let SimMode::Binned { bin_width_s } = self.mode {
            if !(bin_width_s > 0.0 && bin_width_s <= self.duration_s) {
                return Err(invalid("mode.bin_width_s", "must be in (0, duration_s]"));
            }
        }
        if let Some(p) = self.operating_phase_rad {
            if !p.is_finite() {
                return Err(invalid("operating_phase_rad", "must be finite"));
            }
        }
        self.wavelength_nm().map(|_| ())
    }

    /// Laser wavelength after applying the operating-point preset.
    pub fn wavelength_nm(&self) -> Result<f64> {
        let Some(target) = self.operating_phase_rad else {
            return Ok(self.source.wavelength_nm);
        };
        match self
            .circuit
            .wavelength_for_static_phase(target, self.source.wavelength_nm)
        {
            Some(l) => Ok(l),
            None => {
                let off =
                    (target - self.circuit.static_phase(self.source.wavelength_nm)).rem_euclid(std::f64::consts::TAU);
                if off.min(std::f64::consts::TAU - off) < 1e-12 {
                    Ok(self.source.wavelength_nm)
                } else {
                    Err(Error::Inconsistent(
                        "operating_phase_rad needs an arm imbalance (mzi.residual_opd_um != 0)".into(),
                    ))
                }
            }
        }
    }

    pub fn duration_ps(&self) -> Result<u64> {
        duration_to_ps(self.duration_s)
    }

    /// Factor converting the configured flux into photons at the fiber input.
    fn launch_scale(&self, lambda_nm: f64) -> Result<f64> {
        match self.source.reference_plane {
            ReferencePlane::ChipInput => Ok(1.0),
            ReferencePlane::DetectorInput => {
                let t = self
                    .circuit
                    .detector_plane_transmission(lambda_nm, usize::from(self.source.reference_detector));
                if t > 0.0 {
                    Ok(1.0 / t)
                } else {
                    Err(Error::Inconsistent("no transmission to the reference detector".into()))
                }
            }
        }
    }

    /// Photons per second launched into the input grating.
    pub fn launched_rate(&self) -> Result<f64> {
        let l = self.wavelength_nm()?;
        Ok(self.source.mean_rate() * self.launch_scale(l)?)
    }
}

/// Per-photon router: evaluates the instantaneous circuit state and samples a
/// destination.
#[derive(Clone, Debug)]
pub struct Router {
    circuit: CircuitSpec,
    drive: EffectiveDrive,
    lambda_nm: f64,
    static_phase: f64,
    g_in: f64,
    g_out: f64,
    tap_1: (f64, f64),
    tap_2: (f64, f64),
    frozen: Option<PortPowers>,
}

impl Router {
    pub fn new(s: &Scenario) -> Result<Self> {
        s.validate()?;
        let lambda_nm = s.wavelength_nm()?;
        let c = s.circuit;
        let tap = |t: &crate::optics::CouplerSpec| {
            let a = t.amplitude_factor().powi(2);
            (a * t.split, a * t.through_fraction())
        };
        let mut r = Self {
            circuit: c,
            drive: EffectiveDrive::new(s.eom, s.drive, s.drift),
            lambda_nm,
            static_phase: c.static_phase(lambda_nm),
            g_in: c.grating_in.efficiency(lambda_nm),
            g_out: c.grating_out.efficiency(lambda_nm),
            tap_1: tap(&c.tap_1),
            tap_2: tap(&c.tap_2),
            frozen: None,
        };
        if r.drive.is_static() {
            r.frozen = Some(r.coupled_fractions_for(r.drive.phase_at_ps(0)));
        }
        Ok(r)
    }

    pub fn wavelength_nm(&self) -> f64 {
        self.lambda_nm
    }

    /// Input grating efficiency at the operating wavelength.
    pub fn input_efficiency(&self) -> f64 {
        self.g_in
    }

    /// Port fractions for a photon already inside the chip.
    fn coupled_fractions_for(&self, drive_phase: f64) -> PortPowers {
        let (bar, cross) = mzi_output_powers(&self.circuit.mzi, drive_phase + self.static_phase);
        PortPowers {
            det1: bar * self.tap_1.0,
            det2: cross * self.tap_2.0,
            out1: bar * self.tap_1.1 * self.g_out,
            out2: cross * self.tap_2.1 * self.g_out,
        }
    }

    fn coupled_fractions_at(&self, t_ps: u64) -> PortPowers {
        match self.frozen {
            Some(p) => p,
            None => self.coupled_fractions_for(self.drive.phase_at_ps(t_ps)),
        }
    }

    /// Fractions of the light launched at the fiber reaching each port at `t_ps`.
    pub fn fractions_at(&self, t_ps: u64) -> PortPowers {
        self.coupled_fractions_at(t_ps).scale(self.g_in)
    }

    fn pick(p: &PortPowers, u: f64) -> Destination {
        let mut acc = p.det1;
        if u < acc {
            return Destination::Det1;
        }
        acc += p.det2;
        if u < acc {
            return Destination::Det2;
        }
        acc += p.out1;
        if u < acc {
            return Destination::Out1;
        }
        acc += p.out2;
        if u < acc {
            return Destination::Out2;
        }
        Destination::Lost
    }

    /// Destination of a photon launched at the fiber at `t_ps`, using the
    /// uniform draw `u`.
    pub fn route(&self, t_ps: u64, u: f64) -> Destination {
        Self::pick(&self.fractions_at(t_ps), u)
    }

    /// Destination of a photon known to have passed the input grating.
    fn route_coupled(&self, t_ps: u64, u: f64) -> Destination {
        Self::pick(&self.coupled_fractions_at(t_ps), u)
    }

    /// Port fractions (from the fiber) averaged over `[t0, t1)`.
    pub fn mean_fractions(&self, t0_ps: u64, t1_ps: u64) -> PortPowers {
        const N: usize = 256;
        if let Some(p) = self.frozen {
            return p.scale(self.g_in);
        }
        let w = &self.drive.waveform;
        let span = t1_ps.saturating_sub(t0_ps) as f64;
        let drifting = !matches!(self.drive.drift, DriftModel::CryoStable) && w.offset_volts != 0.0;
        let mut acc = PortPowers::default();
        let mut n = 0usize;
        let mut add = |v: f64| {
            let p = self.coupled_fractions_for(phase_from_voltage(&self.drive.eom, v));
            acc.det1 += p.det1;
            acc.det2 += p.det2;
            acc.out1 += p.out1;
            acc.out2 += p.out2;
            n += 1;
        };
        if w.is_periodic() && w.vpp > 0.0 {
            let n_t = if drifting { 16 } else { 1 };
            for j in 0..n_t {
                let t_s = (t0_ps as f64 + (j as f64 + 0.5) / n_t as f64 * span) * 1e-12;
                let dc = apply_dc_drift(&self.drive.drift, w.offset_volts, t_s);
                for k in 0..N {
                    let x = (k as f64 + 0.5) / N as f64;
                    let ac = w.voltage_at(x / w.frequency_hz) - w.offset_volts;
                    add(dc + ac * self.drive.response());
                }
            }
        } else {
            for j in 0..N {
                let t = t0_ps as f64 + (j as f64 + 0.5) / N as f64 * span;
                add(self.drive.voltage_at_ps(t as u64));
            }
        }
        acc.scale(self.g_in / n as f64)
    }
}

/// Destination of photon number `index`, launched at `t_ps`, in scenario `s`.
pub fn route_photon(t_ps: u64, index: u64, s: &Scenario) -> Result<Destination> {
    let r = Router::new(s)?;
    Ok(r.route(t_ps, CounterRng::new(s.seed).uniform(streams::ROUTING, index)))
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct RouteCounts {
    pub det1: u64,
    pub det2: u64,
    pub out1: u64,
    pub out2: u64,
    pub lost: u64,
}

impl RouteCounts {
    fn add(&mut self, d: Destination) {
        match d {
            Destination::Det1 => self.det1 += 1,
            Destination::Det2 => self.det2 += 1,
            Destination::Out1 => self.out1 += 1,
            Destination::Out2 => self.out2 += 1,
            Destination::Lost => self.lost += 1,
        }
    }

    pub fn total(&self) -> u64 {
        self.det1 + self.det2 + self.out1 + self.out2 + self.lost
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct MonitorPowers {
    pub out1_watts: f64,
    pub out2_watts: f64,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct RunStats {
    /// Photons that passed the input grating (per-photon mode only).
    pub photons_coupled: u64,
    pub routed: RouteCounts,
    pub dark_clicks: [u64; 2],
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct BinnedCounts {
    pub bin_width_ps: u64,
    pub det1: Vec<u64>,
    pub det2: Vec<u64>,
    /// Length of the final bin, which may be shorter than the others.
    pub last_bin_ps: u64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ScenarioOutput {
    pub wavelength_nm: f64,
    pub duration_ps: u64,
    pub det1: Vec<TimeTag>,
    pub det2: Vec<TimeTag>,
    pub trigger: Option<PeriodicTrain>,
    pub laser_ref: Option<PeriodicTrain>,
    pub binned: Option<BinnedCounts>,
    pub monitor: MonitorPowers,
    pub stats: RunStats,
}

impl ScenarioOutput {
    pub fn detector_tags(&self, channel: u32) -> &[TimeTag] {
        match channel {
            DET1_CHANNEL => &self.det1,
            DET2_CHANNEL => &self.det2,
            _ => &[],
        }
    }

    /// All tags on `channels`, ordered by time then channel.
    pub fn stream<'a>(&'a self, channels: &[u32]) -> TagMerge<'a> {
        let mut sources: Vec<Box<dyn Iterator<Item = TimeTag> + Send + 'a>> = Vec::new();
        for &ch in channels {
            match ch {
                DET1_CHANNEL | DET2_CHANNEL => sources.push(Box::new(self.detector_tags(ch).iter().copied())),
                TRIGGER_CHANNEL => {
                    if let Some(t) = &self.trigger {
                        sources.push(Box::new(t.iter()));
                    }
                }
                LASER_REF_CHANNEL => {
                    if let Some(t) = &self.laser_ref {
                        sources.push(Box::new(t.iter()));
                    }
                }
                _ => {}
            }
        }
        TagMerge::new(sources)
    }

    pub fn click_rate(&self, channel: u32) -> f64 {
        let n = match (&self.binned, channel) {
            (Some(b), DET1_CHANNEL) => b.det1.iter().sum(),
            (Some(b), DET2_CHANNEL) => b.det2.iter().sum(),
            _ => self.detector_tags(channel).len() as u64,
        };
        n as f64 / (self.duration_ps as f64 * 1e-12)
    }
}

fn tags_from_clicks(clicks: &[crate::snspd::ClickEvent]) -> Vec<TimeTag> {
    let mut tags: Vec<TimeTag> = clicks
        .iter()
        .map(|c| TimeTag::new(c.channel, c.recorded_time_ps.max(0) as u64))
        .collect();
    tags.sort_by_key(|t| t.time_ps);
    tags
}

/// Runs a full scenario. Deterministic in the scenario, including the seed.
pub fn run_scenario(s: &Scenario) -> Result<ScenarioOutput> {
    let router = Router::new(s)?;
    for d in &s.detectors {
        d.check_operable()?;
    }
    let lambda = router.wavelength_nm();
    let duration_ps = s.duration_ps()?;
    let launched = s.launched_rate()?;
    let rng = CounterRng::new(s.seed);

    let mut out = ScenarioOutput {
        wavelength_nm: lambda,
        duration_ps,
        det1: Vec::new(),
        det2: Vec::new(),
        trigger: None,
        laser_ref: None,
        binned: None,
        monitor: MonitorPowers::default(),
        stats: RunStats::default(),
    };

    let mean = router.mean_fractions(0, duration_ps);
    let e_ph = photon_energy_j(lambda);
    out.monitor = MonitorPowers {
        out1_watts: launched * mean.out1 * e_ph,
        out2_watts: launched * mean.out2 * e_ph,
    };

    match s.mode {
        SimMode::PerPhoton => {
            // The input grating does not depend on time, so thinning the
            // arrival process by its efficiency is exact for a Poisson source.
            let scale = s.launch_scale(lambda)? * router.input_efficiency();
            let arrivals = Arrivals::new(Process::of(&s.source, scale), duration_ps, &rng);
            let mut at = [Vec::new(), Vec::new()];
            let mut routed = RouteCounts::default();
            for (i, t) in arrivals.enumerate() {
                let d = router.route_coupled(t, rng.uniform(streams::ROUTING, i as u64));
                routed.add(d);
                match d {
                    Destination::Det1 => at[0].push(t),
                    Destination::Det2 => at[1].push(t),
                    _ => {}
                }
            }
            out.stats.photons_coupled = routed.total();
            out.stats.routed = routed;
            let window = (0, duration_ps);
            let c1 = process_arrivals(&s.detectors[0], &at[0], window, &rng, DET1_CHANNEL)?;
            drop(std::mem::take(&mut at[0]));
            let c2 = process_arrivals(&s.detectors[1], &at[1], window, &rng, DET2_CHANNEL)?;
            out.stats.dark_clicks = [
                c1.iter().filter(|c| c.dark).count() as u64,
                c2.iter().filter(|c| c.dark).count() as u64,
            ];
            out.det1 = tags_from_clicks(&c1);
            out.det2 = tags_from_clicks(&c2);
        }
        SimMode::Binned { bin_width_s } => {
            let bin_ps = ((bin_width_s * 1e12).round() as u64).max(1);
            let nbins = duration_ps.div_ceil(bin_ps);
            let mut b = BinnedCounts {
                bin_width_ps: bin_ps,
                det1: Vec::with_capacity(nbins as usize),
                det2: Vec::with_capacity(nbins as usize),
                last_bin_ps: duration_ps - (nbins - 1) * bin_ps,
            };
            for k in 0..nbins {
                let t0 = k * bin_ps;
                let t1 = (t0 + bin_ps).min(duration_ps);
                let f = router.mean_fractions(t0, t1);
                let len_s = (t1 - t0) as f64 * 1e-12;
                for (det, (spec, frac)) in s.detectors.iter().zip([f.det1, f.det2]).enumerate() {
                    let rate = spec.expected_click_rate(launched * frac)?;
                    let lambda = rate * len_s;
                    let n = if lambda > 0.0 {
                        let mut st = rng.stream(streams::BINNED + det as u64);
                        st.seek(k << 20);
                        let p = Poisson::new(lambda).map_err(|e| Error::Inconsistent(e.to_string()))?;
                        p.sample(&mut st) as u64
                    } else {
                        0
                    };
                    if det == 0 {
                        b.det1.push(n);
                    } else {
                        b.det2.push(n);
                    }
                }
            }
            out.binned = Some(b);
        }
    }

    if s.drive.is_periodic() {
        let period = s
            .drive
            .period_ps()
            .unwrap_or_else(|| (1e12 / s.drive.frequency_hz).round() as u64)
            .max(1);
        out.trigger = Some(PeriodicTrain::within(TRIGGER_CHANNEL, period, 0, duration_ps));
    }
    if s.source.kind == SourceKind::Pulsed && s.mode == SimMode::PerPhoton {
        let d = s.source.reference_delay_ps;
        out.laser_ref = Some(PeriodicTrain::within(
            LASER_REF_CHANNEL,
            s.source.pulse_period_ps(),
            d,
            duration_ps.saturating_add(d),
        ));
    }
    Ok(out)
}
