//! Simulation and parameter extraction for a flux-tunable multimode
//! superconducting resonator under parametric flux modulation.
//!
//! * [`model`]: SQUID inductance, mode frequencies, motional averaging.
//! * [`system`]: the rotating-frame two-mode description.
//! * [`steady`]: CW reflection spectra and normal-mode splitting.
//! * [`dynamics`]: time-domain pulse absorption, beating and storage.
//! * [`fitting`]: damped Gauss–Newton fits of spectra and scaling laws.
//! * [`config`], [`scenario`]: the JSON-driven figure runner behind the CLI.

pub mod config;
pub mod constants;
pub mod dynamics;
pub mod fitting;
pub mod model;
pub mod scenario;
pub mod steady;
pub mod system;

pub use model::{CouplingLaw, DeviceParams, FluxOperatingPoint, ModeParams, ModelError};
pub use steady::{Spectrum, SteadyError};
pub use system::{Detunings, PartnerSide, TwoModeSystem};
