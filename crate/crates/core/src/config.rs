//! JSON scenario configuration.
//!
//! Every dimensional number carries its unit as a single-key object:
//! `{"ghz": 5.7284}`, `{"mhz": 6.6}`, `{"ns": 25}`, `{"dbm": -102}`,
//! `{"phi0": 0.33}`, `{"ua": 1.0}`, `{"nh": 1.2}`, `{"pf": 0.5}`,
//! `{"ohm2": 2500}`, `{"ghz_per_phi0": 1.0}`. Frequencies are ordinary
//! frequencies (ω/2π) and are converted to rad/s on load.

use std::fmt;
use std::path::{Path, PathBuf};

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use serde_json::{Map, Value};
use thiserror::Error;

use crate::constants::{reference, TWO_PI};
use crate::fitting::DataMode;
use crate::model::{self, CouplingLaw, DeviceParams, FluxOperatingPoint, ModeParams, ModelError};
use crate::steady::linspace;
use crate::system::{PartnerSide, TwoModeSystem};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", deny_unknown_fields)]
pub enum Freq {
    Ghz(f64),
    Mhz(f64),
}

impl Freq {
    /// Angular frequency, rad/s.
    pub fn rad_s(self) -> f64 {
        match self {
            Freq::Ghz(v) => TWO_PI * v * 1e9,
            Freq::Mhz(v) => TWO_PI * v * 1e6,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", deny_unknown_fields)]
pub enum Time {
    Ns(f64),
}

impl Time {
    pub fn seconds(self) -> f64 {
        match self {
            Time::Ns(v) => v * 1e-9,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", deny_unknown_fields)]
pub enum Power {
    Dbm(f64),
}

impl Power {
    pub fn dbm(self) -> f64 {
        match self {
            Power::Dbm(v) => v,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", deny_unknown_fields)]
pub enum Flux {
    Phi0(f64),
}

impl Flux {
    pub fn phi0(self) -> f64 {
        match self {
            Flux::Phi0(v) => v,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", deny_unknown_fields)]
pub enum Current {
    Ua(f64),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", deny_unknown_fields)]
pub enum Inductance {
    Nh(f64),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", deny_unknown_fields)]
pub enum Capacitance {
    Pf(f64),
}

/// L/C ratio of a mode, Ω².
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", deny_unknown_fields)]
pub enum LcRatio {
    Ohm2(f64),
}

impl Default for LcRatio {
    fn default() -> Self {
        LcRatio::Ohm2(reference::RATIO_HINT)
    }
}

/// Coupling-law slope η.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", deny_unknown_fields)]
pub enum Slope {
    GhzPerPhi0(f64),
}

impl Default for Slope {
    fn default() -> Self {
        Slope::GhzPerPhi0(reference::ETA_GHZ_PER_PHI0)
    }
}

impl Slope {
    pub fn law(self) -> CouplingLaw {
        match self {
            Slope::GhzPerPhi0(v) => CouplingLaw { eta: TWO_PI * v * 1e9 },
        }
    }
}

/// `count` evenly spaced points from `start` to `stop` inclusive.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Axis<Q> {
    pub start: Q,
    pub stop: Q,
    pub count: usize,
}

impl<Q: Copy> Axis<Q> {
    pub fn values(&self, f: impl Fn(Q) -> f64) -> Vec<f64> {
        linspace(f(self.start), f(self.stop), self.count)
    }

    fn check(&self, pointer: &str, f: impl Fn(Q) -> f64, out: &mut Vec<Violation>) {
        let (a, b) = (f(self.start), f(self.stop));
        if self.count == 0 {
            out.push(Violation::new(format!("{pointer}/count"), "count must be >= 1"));
        }
        if !(a.is_finite() && b.is_finite()) {
            out.push(Violation::new(pointer, "start and stop must be finite"));
        } else if self.count > 1 && !(b > a) {
            out.push(Violation::new(format!("{pointer}/stop"), "axis must be strictly increasing (stop > start)"));
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CalibratedMode {
    pub n: u32,
    /// Resonance at the calibration flux.
    pub freq: Freq,
    pub kappa_tot: Freq,
    pub kappa_ext: Freq,
}

/// Device whose mode circuits are calibrated to given resonances.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CalibratedDevice {
    pub i_c: Current,
    pub d: f64,
    pub phi_dc: Flux,
    #[serde(default)]
    pub ratio_hint: LcRatio,
    pub modes: Vec<CalibratedMode>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CircuitMode {
    pub n: u32,
    pub l: Inductance,
    pub c: Capacitance,
    pub kappa_tot: Freq,
    pub kappa_ext: Freq,
}

/// Device given directly by its circuit values.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CircuitDevice {
    pub i_c: Current,
    pub d: f64,
    pub modes: Vec<CircuitMode>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum DeviceSpec {
    /// The measured three-mode device.
    #[default]
    Reference,
    Calibrated(CalibratedDevice),
    Circuit(CircuitDevice),
    /// A JSON file holding one of the other forms, relative to the config.
    Path(String),
}

impl DeviceSpec {
    pub fn resolve(&self, base: &Path) -> Result<DeviceParams, ConfigError> {
        match self {
            DeviceSpec::Reference => Ok(DeviceParams::reference()),
            DeviceSpec::Calibrated(c) => {
                let Current::Ua(i) = c.i_c;
                let LcRatio::Ohm2(r) = c.ratio_hint;
                let i_c = i * 1e-6;
                let modes = c
                    .modes
                    .iter()
                    .map(|m| {
                        let (l, cap) = model::calibrate_lc(m.freq.rad_s(), c.phi_dc.phi0(), r, i_c, c.d)?;
                        Ok(ModeParams {
                            n: m.n,
                            l,
                            c: cap,
                            kappa_tot: m.kappa_tot.rad_s(),
                            kappa_ext: m.kappa_ext.rad_s(),
                        })
                    })
                    .collect::<Result<Vec<_>, ModelError>>()
                    .map_err(|e| ConfigError::invalid("/device/calibrated", e.to_string()))?;
                Ok(DeviceParams { i_c, d: c.d, modes })
            }
            DeviceSpec::Circuit(c) => {
                let Current::Ua(i) = c.i_c;
                let modes = c
                    .modes
                    .iter()
                    .map(|m| {
                        let (Inductance::Nh(l), Capacitance::Pf(cap)) = (m.l, m.c);
                        ModeParams {
                            n: m.n,
                            l: l * 1e-9,
                            c: cap * 1e-12,
                            kappa_tot: m.kappa_tot.rad_s(),
                            kappa_ext: m.kappa_ext.rad_s(),
                        }
                    })
                    .collect();
                Ok(DeviceParams { i_c: i * 1e-6, d: c.d, modes })
            }
            DeviceSpec::Path(p) => {
                let path = base.join(p);
                let text = std::fs::read_to_string(&path)
                    .map_err(|e| ConfigError::Io { path: path.display().to_string(), message: e.to_string() })?;
                let inner: DeviceSpec = parse_at(&text, "/device/path")?;
                if matches!(inner, DeviceSpec::Path(_)) {
                    return Err(ConfigError::invalid("/device/path", "device files may not point to further files"));
                }
                let dir = path.parent().map(Path::to_path_buf).unwrap_or_default();
                inner.resolve(&dir)
            }
        }
    }

    fn check(&self, base: &Path, out: &mut Vec<Violation>) {
        let mode_checks = |ptr: &str, kt: f64, ke: f64, out: &mut Vec<Violation>| {
            if !(ke > 0.0) {
                out.push(Violation::new(format!("{ptr}/kappa_ext"), "kappa_ext must be > 0"));
            }
            if ke > kt {
                out.push(Violation::new(
                    format!("{ptr}/kappa_ext"),
                    format!("invariant kappa_ext <= kappa_tot violated ({ke} > {kt})"),
                ));
            }
        };
        match self {
            DeviceSpec::Reference => {}
            DeviceSpec::Calibrated(c) => {
                check_device_scalars("/device/calibrated", c.i_c, c.d, c.modes.len(), out);
                for (i, m) in c.modes.iter().enumerate() {
                    let p = format!("/device/calibrated/modes/{i}");
                    if !(m.freq.rad_s() > 0.0) {
                        out.push(Violation::new(format!("{p}/freq"), "freq must be > 0"));
                    }
                    mode_checks(&p, m.kappa_tot.rad_s(), m.kappa_ext.rad_s(), out);
                }
                let LcRatio::Ohm2(r) = c.ratio_hint;
                if !(r > 0.0) {
                    out.push(Violation::new("/device/calibrated/ratio_hint", "ratio_hint must be > 0"));
                }
            }
            DeviceSpec::Circuit(c) => {
                check_device_scalars("/device/circuit", c.i_c, c.d, c.modes.len(), out);
                for (i, m) in c.modes.iter().enumerate() {
                    let p = format!("/device/circuit/modes/{i}");
                    let (Inductance::Nh(l), Capacitance::Pf(cap)) = (m.l, m.c);
                    if !(l > 0.0) {
                        out.push(Violation::new(format!("{p}/l"), "l must be > 0"));
                    }
                    if !(cap > 0.0) {
                        out.push(Violation::new(format!("{p}/c"), "c must be > 0"));
                    }
                    mode_checks(&p, m.kappa_tot.rad_s(), m.kappa_ext.rad_s(), out);
                }
            }
            DeviceSpec::Path(p) => {
                if !base.join(p).is_file() {
                    out.push(Violation::new("/device/path", format!("file {p} does not exist")));
                }
            }
        }
        if out.is_empty() {
            if let Err(e) = self.resolve(base).and_then(|d| {
                let v = d.violations();
                if v.is_empty() {
                    Ok(())
                } else {
                    Err(ConfigError::invalid("/device", v.join("; ")))
                }
            }) {
                out.extend(e.violations());
            }
        }
    }
}

fn check_device_scalars(ptr: &str, i_c: Current, d: f64, n_modes: usize, out: &mut Vec<Violation>) {
    let Current::Ua(i) = i_c;
    if !(i > 0.0) {
        out.push(Violation::new(format!("{ptr}/i_c"), "i_c must be > 0"));
    }
    if !(0.0..=1.0).contains(&d) {
        out.push(Violation::new(format!("{ptr}/d"), "d must lie in [0, 1]"));
    }
    if n_modes == 0 {
        out.push(Violation::new(format!("{ptr}/modes"), "at least one mode is required"));
    }
}

/// Probed/partner pair derived from the device at a flux operating point.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DeviceSystem {
    pub probed: u32,
    pub partner: u32,
    pub phi_dc: Flux,
    pub delta_phi: Flux,
    pub omega_mod: Freq,
    #[serde(default)]
    pub eta: Slope,
}

/// Two-mode system written out parameter by parameter.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExplicitSystem {
    pub omega3: Freq,
    pub omega2: Freq,
    pub kappa_tot3: Freq,
    pub kappa_tot2: Freq,
    pub kappa_ext3: Freq,
    pub g: Freq,
    /// On resonance (Δ2 = 0) when absent.
    #[serde(default)]
    pub omega_mod: Option<Freq>,
    #[serde(default)]
    pub partner: PartnerSide,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ReferenceSystem {
    pub g: Freq,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SystemSpec {
    /// Modes 3 and 2 of the measured device at Δ2 = 0.
    Reference(ReferenceSystem),
    Device(DeviceSystem),
    Explicit(ExplicitSystem),
}

/// A resolved system plus the motional shifts (probed, partner) it contains.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ResolvedSystem {
    pub system: TwoModeSystem,
    pub shifts: (f64, f64),
}

impl SystemSpec {
    pub fn resolve(&self, device: &DeviceParams) -> Result<ResolvedSystem, ModelError> {
        match self {
            SystemSpec::Reference(r) => {
                Ok(ResolvedSystem { system: TwoModeSystem::reference(r.g.rad_s()), shifts: (0.0, 0.0) })
            }
            SystemSpec::Explicit(e) => {
                let s = TwoModeSystem {
                    omega3_shifted: e.omega3.rad_s(),
                    omega2_shifted: e.omega2.rad_s(),
                    kappa_tot3: e.kappa_tot3.rad_s(),
                    kappa_tot2: e.kappa_tot2.rad_s(),
                    kappa_ext3: e.kappa_ext3.rad_s(),
                    g: e.g.rad_s(),
                    omega_mod: e.omega_mod.map_or(0.0, Freq::rad_s),
                    partner: e.partner,
                };
                let s = if e.omega_mod.is_none() { s.on_resonance() } else { s };
                Ok(ResolvedSystem { system: s, shifts: (0.0, 0.0) })
            }
            SystemSpec::Device(d) => {
                let op = FluxOperatingPoint {
                    phi_dc: d.phi_dc.phi0(),
                    delta_phi: d.delta_phi.phi0(),
                    omega_mod: d.omega_mod.rad_s(),
                };
                let s = TwoModeSystem::from_device(device, &op, &d.eta.law(), d.probed, d.partner)?;
                let shifts = (
                    s.omega3_shifted - model::mode_frequency(d.probed, op.phi_dc, device)?,
                    s.omega2_shifted - model::mode_frequency(d.partner, op.phi_dc, device)?,
                );
                Ok(ResolvedSystem { system: s, shifts })
            }
        }
    }

    fn check(&self, ptr: &str, device: Option<&DeviceParams>, out: &mut Vec<Violation>) {
        match self {
            SystemSpec::Reference(r) => {
                if !(r.g.rad_s() >= 0.0) {
                    out.push(Violation::new(format!("{ptr}/reference/g"), "g must be >= 0"));
                }
            }
            SystemSpec::Explicit(e) => {
                let p = format!("{ptr}/explicit");
                for (name, f) in [("omega3", e.omega3), ("omega2", e.omega2)] {
                    if !(f.rad_s() > 0.0) {
                        out.push(Violation::new(format!("{p}/{name}"), format!("{name} must be > 0")));
                    }
                }
                for (name, f) in [("kappa_tot3", e.kappa_tot3), ("kappa_tot2", e.kappa_tot2), ("kappa_ext3", e.kappa_ext3)] {
                    if !(f.rad_s() > 0.0) {
                        out.push(Violation::new(format!("{p}/{name}"), format!("{name} must be > 0")));
                    }
                }
                if e.kappa_ext3.rad_s() > e.kappa_tot3.rad_s() {
                    out.push(Violation::new(
                        format!("{p}/kappa_ext3"),
                        format!(
                            "invariant kappa_ext3 <= kappa_tot3 violated ({} > {} rad/s)",
                            e.kappa_ext3.rad_s(),
                            e.kappa_tot3.rad_s()
                        ),
                    ));
                }
                if !(e.g.rad_s() >= 0.0) {
                    out.push(Violation::new(format!("{p}/g"), "g must be >= 0"));
                }
            }
            SystemSpec::Device(d) => {
                let p = format!("{ptr}/device");
                if d.probed == d.partner {
                    out.push(Violation::new(format!("{p}/partner"), "partner must differ from probed"));
                }
                if let Some(dev) = device {
                    for (name, n) in [("probed", d.probed), ("partner", d.partner)] {
                        if dev.mode(n).is_err() {
                            out.push(Violation::new(format!("{p}/{name}"), format!("mode {n} is not part of the device")));
                        }
                    }
                }
                if !(d.delta_phi.phi0() >= 0.0) {
                    out.push(Violation::new(format!("{p}/delta_phi"), "delta_phi must be >= 0"));
                }
                if !(d.omega_mod.rad_s() >= 0.0) {
                    out.push(Violation::new(format!("{p}/omega_mod"), "omega_mod must be >= 0"));
                }
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EnvelopeConfig {
    ContinuousWave,
    Gaussian { t0: Time, tau_d: Time },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DriveConfig {
    pub carrier: Freq,
    pub power: Power,
    pub envelope: EnvelopeConfig,
}

impl DriveConfig {
    pub fn spec(&self) -> crate::dynamics::DriveSpec {
        use crate::dynamics::{DriveSpec, Envelope};
        DriveSpec {
            omega_p: self.carrier.rad_s(),
            power_dbm: self.power.dbm(),
            envelope: match self.envelope {
                EnvelopeConfig::ContinuousWave => Envelope::ContinuousWave,
                EnvelopeConfig::Gaussian { t0, tau_d } => Envelope::Gaussian { t0: t0.seconds(), tau_d: tau_d.seconds() },
            },
        }
    }

    fn check(&self, out: &mut Vec<Violation>) {
        if !(self.carrier.rad_s() > 0.0) {
            out.push(Violation::new("/drive/carrier", "carrier must be > 0"));
        }
        if !self.power.dbm().is_finite() {
            out.push(Violation::new("/drive/power", "power must be finite"));
        }
        if let EnvelopeConfig::Gaussian { tau_d, .. } = self.envelope {
            if !(tau_d.seconds() > 0.0) {
                out.push(Violation::new("/drive/envelope/gaussian/tau_d", "tau_d must be > 0"));
            }
        }
    }
}

fn default_true() -> bool {
    true
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FluxArchScenario {
    pub flux: Axis<Flux>,
    /// All device modes when absent.
    #[serde(default)]
    pub modes: Option<Vec<u32>>,
    /// Fit the generated arches back and report the recovered circuit.
    #[serde(default)]
    pub fit: bool,
    #[serde(default)]
    pub ratio_hint: LcRatio,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SpectrumScenario {
    pub system: SystemSpec,
    pub probe: Axis<Freq>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SplittingMapScenario {
    /// (lower, upper) mode numbers of the coupled pair.
    pub pair: [u32; 2],
    pub phi_dc: Flux,
    pub delta_phi: Flux,
    #[serde(default)]
    pub eta: Slope,
    pub modulation: Axis<Freq>,
    /// Probe window around the lower mode.
    pub probe_lower: Axis<Freq>,
    /// Probe window around the upper mode.
    pub probe_upper: Axis<Freq>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SplittingSweepScenario {
    pub probed: u32,
    pub partner: u32,
    pub phi_dc: Flux,
    pub omega_mod: Freq,
    #[serde(default)]
    pub eta: Slope,
    pub delta_phi: Axis<Flux>,
    pub probe: Axis<Freq>,
    /// Fit every column and the g/Δ_Φ scaling laws.
    #[serde(default = "default_true")]
    pub fit: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BeatingScenario {
    pub system: SystemSpec,
    pub drive: DriveConfig,
    pub start: Time,
    pub stop: Time,
    /// Window for the beat analysis; the whole trace after the pulse peak when absent.
    #[serde(default)]
    pub window: Option<[Time; 2]>,
    #[serde(default)]
    pub dt: Option<Time>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MemoryScenario {
    pub system: SystemSpec,
    pub drive: DriveConfig,
    pub start: Time,
    pub storage_time: Axis<Time>,
    /// First |a| minimum after the pulse when absent.
    #[serde(default)]
    pub t_off: Option<Time>,
    /// Integration time after the coupling is restored.
    pub retrieval: Time,
    #[serde(default = "default_true")]
    pub toggle_shifts: bool,
    #[serde(default)]
    pub dt: Option<Time>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SingleModeInitial {
    pub omega_r: Freq,
    pub kappa_tot: Freq,
    pub kappa_ext: Freq,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LambdaFixedConfig {
    pub kappa_tot2: Freq,
    pub kappa_tot3: Freq,
    pub kappa_ext3: Freq,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LambdaInitial {
    pub g: Freq,
    pub delta2: Freq,
    pub omega3: Freq,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FitSpec {
    /// Spectrum CSV or two columns (omega_p_ghz, abs_rc).
    SingleMode {
        data: String,
        initial: SingleModeInitial,
        #[serde(default)]
        data_mode: DataMode,
    },
    Lambda {
        data: String,
        fixed: LambdaFixedConfig,
        initial: LambdaInitial,
        #[serde(default)]
        data_mode: DataMode,
        #[serde(default)]
        fit_amplitude: bool,
    },
    /// CSV with columns mode, phi0, omega_ghz.
    FluxArch {
        data: String,
        initial: DeviceSpec,
        #[serde(default)]
        ratio_hint: LcRatio,
        #[serde(default)]
        reference_mode: Option<u32>,
    },
    /// Two columns (x, y); through-origin y = c·x^order.
    Polynomial { data: String, order: u8 },
}

impl FitSpec {
    pub fn data_path(&self) -> &str {
        match self {
            FitSpec::SingleMode { data, .. }
            | FitSpec::Lambda { data, .. }
            | FitSpec::FluxArch { data, .. }
            | FitSpec::Polynomial { data, .. } => data,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FitScenario {
    pub fit: FitSpec,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ScenarioKind {
    FluxArch,
    Spectrum,
    SplittingMap,
    SplittingSweep,
    Beating,
    Memory,
    Fit,
}

impl ScenarioKind {
    pub fn name(self) -> &'static str {
        match self {
            ScenarioKind::FluxArch => "flux-arch",
            ScenarioKind::Spectrum => "spectrum",
            ScenarioKind::SplittingMap => "splitting-map",
            ScenarioKind::SplittingSweep => "splitting-sweep",
            ScenarioKind::Beating => "beating",
            ScenarioKind::Memory => "memory",
            ScenarioKind::Fit => "fit",
        }
    }
}

impl fmt::Display for ScenarioKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum ScenarioBody {
    FluxArch(FluxArchScenario),
    Spectrum(SpectrumScenario),
    SplittingMap(SplittingMapScenario),
    SplittingSweep(SplittingSweepScenario),
    Beating(BeatingScenario),
    Memory(MemoryScenario),
    Fit(FitScenario),
}

impl ScenarioBody {
    pub fn kind(&self) -> ScenarioKind {
        match self {
            ScenarioBody::FluxArch(_) => ScenarioKind::FluxArch,
            ScenarioBody::Spectrum(_) => ScenarioKind::Spectrum,
            ScenarioBody::SplittingMap(_) => ScenarioKind::SplittingMap,
            ScenarioBody::SplittingSweep(_) => ScenarioKind::SplittingSweep,
            ScenarioBody::Beating(_) => ScenarioKind::Beating,
            ScenarioBody::Memory(_) => ScenarioKind::Memory,
            ScenarioBody::Fit(_) => ScenarioKind::Fit,
        }
    }
}

/// A parsed configuration: common fields plus the scenario-specific body,
/// which sits flat at the top level of the JSON document.
#[derive(Debug, Clone, PartialEq)]
pub struct ScenarioConfig {
    pub device: DeviceSpec,
    pub output_dir: Option<String>,
    pub body: ScenarioBody,
    /// Directory relative paths are resolved against.
    pub base_dir: PathBuf,
}

/// One failed check, located by a JSON pointer into the config document.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct Violation {
    pub pointer: String,
    pub message: String,
}

impl Violation {
    pub fn new(pointer: impl Into<String>, message: impl Into<String>) -> Self {
        Violation { pointer: pointer.into(), message: message.into() }
    }
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let p = if self.pointer.is_empty() { "/" } else { &self.pointer };
        write!(f, "{p}: {}", self.message)
    }
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ConfigError {
    #[error("cannot read {path}: {message}")]
    Io { path: String, message: String },
    #[error("malformed JSON: {0}")]
    Syntax(String),
    #[error("{}", .0.iter().map(|v| v.to_string()).collect::<Vec<_>>().join("\n"))]
    Invalid(Vec<Violation>),
    #[error("config describes scenario {found} but was run as {expected}")]
    Mismatch { expected: ScenarioKind, found: ScenarioKind },
}

impl ConfigError {
    fn invalid(pointer: &str, message: impl Into<String>) -> Self {
        ConfigError::Invalid(vec![Violation::new(pointer, message)])
    }

    pub fn violations(&self) -> Vec<Violation> {
        match self {
            ConfigError::Invalid(v) => v.clone(),
            other => vec![Violation::new("", other.to_string())],
        }
    }
}

fn pointer_of(path: &serde_path_to_error::Path, prefix: &str) -> String {
    use serde_path_to_error::Segment;
    let mut s = prefix.to_string();
    for seg in path.iter() {
        match seg {
            Segment::Seq { index } => s.push_str(&format!("/{index}")),
            Segment::Map { key } => s.push_str(&format!("/{}", key.replace('~', "~0").replace('/', "~1"))),
            Segment::Enum { variant } => s.push_str(&format!("/{variant}")),
            Segment::Unknown => s.push_str("/?"),
        }
    }
    s
}

fn from_value_at<T: DeserializeOwned>(value: Value, prefix: &str) -> Result<T, ConfigError> {
    serde_path_to_error::deserialize(value).map_err(|e| {
        let ptr = pointer_of(e.path(), prefix);
        ConfigError::invalid(&ptr, e.inner().to_string())
    })
}

fn parse_at<T: DeserializeOwned>(text: &str, prefix: &str) -> Result<T, ConfigError> {
    let value: Value = serde_json::from_str(text).map_err(|e| ConfigError::Syntax(e.to_string()))?;
    from_value_at(value, prefix)
}

impl ScenarioConfig {
    /// Parses and validates a configuration document. Relative paths are
    /// resolved against `base_dir`.
    pub fn parse(text: &str, base_dir: &Path) -> Result<Self, ConfigError> {
        let cfg = Self::parse_schema(text, base_dir)?;
        let v = cfg.violations();
        if v.is_empty() {
            Ok(cfg)
        } else {
            Err(ConfigError::Invalid(v))
        }
    }

    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| ConfigError::Io { path: path.display().to_string(), message: e.to_string() })?;
        let base = path.parent().map(Path::to_path_buf).unwrap_or_default();
        Self::parse(&text, &base)
    }

    /// Schema-level parsing only; physics invariants are left to [`Self::violations`].
    pub fn parse_schema(text: &str, base_dir: &Path) -> Result<Self, ConfigError> {
        let value: Value = serde_json::from_str(text).map_err(|e| ConfigError::Syntax(e.to_string()))?;
        let Value::Object(mut map) = value else {
            return Err(ConfigError::invalid("", "config must be a JSON object"));
        };
        let kind: ScenarioKind = match map.remove("scenario") {
            Some(v) => from_value_at(v, "/scenario")?,
            None => return Err(ConfigError::invalid("/scenario", "missing field `scenario`")),
        };
        let device: DeviceSpec = match map.remove("device") {
            Some(v) => from_value_at(v, "/device")?,
            None => DeviceSpec::default(),
        };
        let output_dir: Option<String> = match map.remove("output_dir") {
            Some(v) => from_value_at(v, "/output_dir")?,
            None => None,
        };
        let rest = Value::Object(map);
        let body = match kind {
            ScenarioKind::FluxArch => ScenarioBody::FluxArch(from_value_at(rest, "")?),
            ScenarioKind::Spectrum => ScenarioBody::Spectrum(from_value_at(rest, "")?),
            ScenarioKind::SplittingMap => ScenarioBody::SplittingMap(from_value_at(rest, "")?),
            ScenarioKind::SplittingSweep => ScenarioBody::SplittingSweep(from_value_at(rest, "")?),
            ScenarioKind::Beating => ScenarioBody::Beating(from_value_at(rest, "")?),
            ScenarioKind::Memory => ScenarioBody::Memory(from_value_at(rest, "")?),
            ScenarioKind::Fit => ScenarioBody::Fit(from_value_at(rest, "")?),
        };
        Ok(ScenarioConfig { device, output_dir, body, base_dir: base_dir.to_path_buf() })
    }

    pub fn kind(&self) -> ScenarioKind {
        self.body.kind()
    }

    pub fn resolve_path(&self, p: &str) -> PathBuf {
        self.base_dir.join(p)
    }

    /// Every violated invariant, aggregated rather than fail-fast.
    pub fn violations(&self) -> Vec<Violation> {
        let mut out = Vec::new();
        self.device.check(&self.base_dir, &mut out);
        let device = if out.is_empty() { self.device.resolve(&self.base_dir).ok() } else { None };
        let dev = device.as_ref();
        let ghz = |f: Freq| f.rad_s();
        match &self.body {
            ScenarioBody::FluxArch(s) => {
                s.flux.check("/flux", Flux::phi0, &mut out);
                if let (Some(modes), Some(d)) = (&s.modes, dev) {
                    for (i, n) in modes.iter().enumerate() {
                        if d.mode(*n).is_err() {
                            out.push(Violation::new(format!("/modes/{i}"), format!("mode {n} is not part of the device")));
                        }
                    }
                }
                if s.fit {
                    let n = s.modes.as_ref().map_or(dev.map_or(2, |d| d.modes.len()), Vec::len);
                    if n < 2 {
                        out.push(Violation::new("/modes", "fitting needs at least 2 modes"));
                    }
                    if s.flux.count < 4 {
                        out.push(Violation::new("/flux/count", "fitting needs at least 4 flux points"));
                    }
                }
            }
            ScenarioBody::Spectrum(s) => {
                s.system.check("/system", dev, &mut out);
                s.probe.check("/probe", ghz, &mut out);
            }
            ScenarioBody::SplittingMap(s) => {
                if let Some(d) = dev {
                    for (i, n) in s.pair.iter().enumerate() {
                        if d.mode(*n).is_err() {
                            out.push(Violation::new(format!("/pair/{i}"), format!("mode {n} is not part of the device")));
                        }
                    }
                }
                if s.pair[0] == s.pair[1] {
                    out.push(Violation::new("/pair", "pair must name two different modes"));
                }
                if !(s.delta_phi.phi0() >= 0.0) {
                    out.push(Violation::new("/delta_phi", "delta_phi must be >= 0"));
                }
                s.modulation.check("/modulation", ghz, &mut out);
                s.probe_lower.check("/probe_lower", ghz, &mut out);
                s.probe_upper.check("/probe_upper", ghz, &mut out);
            }
            ScenarioBody::SplittingSweep(s) => {
                if let Some(d) = dev {
                    for (name, n) in [("probed", s.probed), ("partner", s.partner)] {
                        if d.mode(n).is_err() {
                            out.push(Violation::new(format!("/{name}"), format!("mode {n} is not part of the device")));
                        }
                    }
                }
                if s.probed == s.partner {
                    out.push(Violation::new("/partner", "partner must differ from probed"));
                }
                s.delta_phi.check("/delta_phi", Flux::phi0, &mut out);
                if !(s.delta_phi.start.phi0() >= 0.0) {
                    out.push(Violation::new("/delta_phi/start", "delta_phi must be >= 0"));
                }
                s.probe.check("/probe", ghz, &mut out);
            }
            ScenarioBody::Beating(s) => {
                s.system.check("/system", dev, &mut out);
                s.drive.check(&mut out);
                if !(s.stop.seconds() > s.start.seconds()) {
                    out.push(Violation::new("/stop", "stop must be later than start"));
                }
                if let Some([a, b]) = s.window {
                    if !(b.seconds() > a.seconds()) {
                        out.push(Violation::new("/window/1", "window must be increasing"));
                    }
                }
                check_dt(s.dt, &mut out);
            }
            ScenarioBody::Memory(s) => {
                s.system.check("/system", dev, &mut out);
                s.drive.check(&mut out);
                s.storage_time.check("/storage_time", Time::seconds, &mut out);
                if !(s.storage_time.start.seconds() >= 0.0) {
                    out.push(Violation::new("/storage_time/start", "storage time must be >= 0"));
                }
                if !(s.retrieval.seconds() > 0.0) {
                    out.push(Violation::new("/retrieval", "retrieval must be > 0"));
                }
                if let Some(t) = s.t_off {
                    if !(t.seconds() > s.start.seconds()) {
                        out.push(Violation::new("/t_off", "t_off must be later than start"));
                    }
                }
                check_dt(s.dt, &mut out);
            }
            ScenarioBody::Fit(s) => {
                let p = s.fit.data_path();
                if !self.resolve_path(p).is_file() {
                    let variant = match &s.fit {
                        FitSpec::SingleMode { .. } => "single_mode",
                        FitSpec::Lambda { .. } => "lambda",
                        FitSpec::FluxArch { .. } => "flux_arch",
                        FitSpec::Polynomial { .. } => "polynomial",
                    };
                    out.push(Violation::new(format!("/fit/{variant}/data"), format!("file {p} does not exist")));
                }
                match &s.fit {
                    FitSpec::Polynomial { order, .. } if *order != 1 && *order != 2 => {
                        out.push(Violation::new("/fit/polynomial/order", "order must be 1 or 2"));
                    }
                    FitSpec::Lambda { fixed, .. } if fixed.kappa_ext3.rad_s() > fixed.kappa_tot3.rad_s() => {
                        out.push(Violation::new(
                            "/fit/lambda/fixed/kappa_ext3",
                            "invariant kappa_ext3 <= kappa_tot3 violated",
                        ));
                    }
                    FitSpec::FluxArch { initial, .. } => {
                        let mut inner = Vec::new();
                        initial.check(&self.base_dir, &mut inner);
                        out.extend(inner.into_iter().map(|v| Violation {
                            pointer: v.pointer.replacen("/device", "/fit/flux_arch/initial", 1),
                            message: v.message,
                        }));
                    }
                    _ => {}
                }
            }
        }
        out
    }

    /// The configuration with every default written out.
    pub fn normalized(&self) -> Value {
        let mut body = match &self.body {
            ScenarioBody::FluxArch(s) => {
                let mut s = s.clone();
                if s.modes.is_none() {
                    if let Ok(d) = self.device.resolve(&self.base_dir) {
                        s.modes = Some(d.modes.iter().map(|m| m.n).collect());
                    }
                }
                serde_json::to_value(s)
            }
            ScenarioBody::Spectrum(s) => serde_json::to_value(s),
            ScenarioBody::SplittingMap(s) => serde_json::to_value(s),
            ScenarioBody::SplittingSweep(s) => serde_json::to_value(s),
            ScenarioBody::Beating(s) => serde_json::to_value(s),
            ScenarioBody::Memory(s) => serde_json::to_value(s),
            ScenarioBody::Fit(s) => serde_json::to_value(s),
        }
        .expect("config serializes");
        normalize_systems(&mut body);
        let mut map = Map::new();
        map.insert("scenario".into(), Value::String(self.kind().name().into()));
        map.insert("device".into(), serde_json::to_value(&self.device).expect("device serializes"));
        map.insert("output_dir".into(), serde_json::to_value(&self.output_dir).expect("string serializes"));
        if let Value::Object(b) = body {
            map.extend(b);
        }
        Value::Object(map)
    }
}

/// Writes the resolved ω_Φ into explicit systems that left it implicit.
fn normalize_systems(body: &mut Value) {
    let Some(Value::Object(sys)) = body.get_mut("system") else { return };
    let Some(explicit) = sys.get("explicit").cloned() else { return };
    let Ok(e) = serde_json::from_value::<ExplicitSystem>(explicit) else { return };
    if e.omega_mod.is_none() {
        if let Ok(r) = SystemSpec::Explicit(e).resolve(&DeviceParams::reference()) {
            let resolved = ExplicitSystem { omega_mod: Some(Freq::Ghz(r.system.omega_mod / TWO_PI * 1e-9)), ..e };
            sys.insert("explicit".into(), serde_json::to_value(resolved).expect("system serializes"));
        }
    }
}

fn check_dt(dt: Option<Time>, out: &mut Vec<Violation>) {
    if let Some(t) = dt {
        if !(t.seconds() > 0.0) {
            out.push(Violation::new("/dt", "dt must be > 0"));
        }
    }
}
