//! Simulation and analysis of a cryogenic lithium-niobate photonic circuit with
//! on-chip superconducting detectors.
//!
//! The crate models the passive optics ([`optics`]), the Pockels phase shifter
//! ([`electrooptic`]), the detectors ([`snspd`]) and a time tagger
//! ([`timetag`]), ties them together in a seeded photon Monte Carlo ([`mc`]),
//! and provides the fits used to extract device figures from the simulated
//! data ([`analysis`]).

pub mod analysis;
pub mod electrooptic;
pub mod error;
pub mod mc;
pub mod optics;
pub mod rng;
pub mod snspd;
pub mod timetag;

pub use analysis::FitResult;
pub use electrooptic::{DriftModel, DriveWaveform, EffectiveDrive, EomSpec, OperatingCondition, WaveformKind};
pub use error::{Error, Result};
pub use mc::{
    generate_arrivals, route_photon, run_scenario, Destination, ReferencePlane, Scenario, ScenarioOutput, SimMode,
    SourceKind, SourceSpec,
};
pub use optics::{CircuitSpec, CouplerSpec, GratingCouplerSpec, MziSpec, PortAmplitudes, PortPowers, ResonatorSpec};
pub use rng::CounterRng;
pub use snspd::{ClickEvent, DetectorSpec};
pub use timetag::{Histogram, PeriodicTrain, TimeTag};
