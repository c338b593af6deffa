//! Runs a parsed [`ScenarioConfig`] and writes its artifacts.
//!
//! Artifacts are computed in memory first, in parallel on a bounded rayon
//! pool, then written in a fixed order. Sweep points are collected in sweep
//! order, so the bytes written do not depend on the worker count.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use num_complex::Complex64 as C64;
use rayon::prelude::*;
use serde::Serialize;
use serde_json::{json, Value};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::config::{
    ConfigError, FitSpec, Freq, LcRatio, ScenarioBody, ScenarioConfig, ScenarioKind, Time, Violation,
};
use crate::constants::TWO_PI;
use crate::dynamics::{self, DriveSpec, Envelope, MemoryProtocol, ModulationSchedule, TimeTrace};
use crate::fitting::{self, DataMode, FitResult, LambdaFixed, LambdaOptions, LambdaParams, ModeSamples, SingleModeParams};
use crate::model::{self, FluxOperatingPoint};
use crate::steady::{self, Spectrum, SpectrumMeta};
use crate::system::TwoModeSystem;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum RunError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error("{0}")]
    Numerical(String),
    #[error("i/o error: {0}")]
    Io(String),
}

impl RunError {
    /// 2 for configuration problems, 3 for numerical failures, 1 for I/O.
    pub fn exit_code(&self) -> i32 {
        match self {
            RunError::Config(_) => 2,
            RunError::Numerical(_) => 3,
            RunError::Io(_) => 1,
        }
    }
}

fn num<E: std::fmt::Display>(e: E) -> RunError {
    RunError::Numerical(e.to_string())
}

#[derive(Debug, Clone, Default)]
pub struct RunOptions {
    /// Output directory; the config's `output_dir` (relative to the config
    /// file) or `out/<scenario>` when absent.
    pub out_dir: Option<PathBuf>,
    /// Worker threads; all available cores when absent.
    pub threads: Option<usize>,
    /// Replaces the integration step of time-domain scenarios, seconds.
    pub dt_override: Option<f64>,
}

/// One output file, relative to the run directory.
#[derive(Debug, Clone, PartialEq)]
pub struct Artifact {
    pub path: String,
    pub bytes: Vec<u8>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ManifestEntry {
    pub path: String,
    pub sha256: String,
    pub bytes: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Manifest {
    pub scenario: String,
    pub config: Value,
    pub files: Vec<ManifestEntry>,
    pub warnings: Vec<String>,
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

/// Computes all artifacts of a run without touching the file system (other
/// than reading fit input data).
pub fn compute_artifacts(cfg: &ScenarioConfig, dt_override: Option<f64>) -> Result<(Vec<Artifact>, Vec<String>), RunError> {
    let device = cfg.device.resolve(&cfg.base_dir)?;
    let mut out = Outputs::default();
    match &cfg.body {
        ScenarioBody::FluxArch(s) => flux_arch(&device, s, &mut out)?,
        ScenarioBody::Spectrum(s) => {
            let sys = s.system.resolve(&device).map_err(num)?.system;
            let spec = steady::spectrum_sweep(&sys, &s.probe.values(Freq::rad_s)).map_err(num)?;
            out.spectrum("spectrum", &spec);
        }
        ScenarioBody::SplittingMap(s) => splitting_map(&device, s, &mut out)?,
        ScenarioBody::SplittingSweep(s) => splitting_sweep(&device, s, &mut out)?,
        ScenarioBody::Beating(s) => beating(&device, s, dt_override, &mut out)?,
        ScenarioBody::Memory(s) => memory(&device, s, dt_override, &mut out)?,
        ScenarioBody::Fit(s) => fit(cfg, &s.fit, &mut out)?,
    }
    Ok((out.files, out.warnings))
}

/// Runs the scenario on a pool of `opts.threads` workers and writes every
/// artifact plus `manifest.json` into the run directory.
pub fn run_scenario(cfg: &ScenarioConfig, opts: &RunOptions) -> Result<(PathBuf, Manifest), RunError> {
    if let Some(dt) = opts.dt_override {
        if !(dt > 0.0 && dt.is_finite()) {
            return Err(ConfigError::Invalid(vec![Violation::new("--dt-override", "dt must be > 0")]).into());
        }
    }
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(opts.threads.unwrap_or(0))
        .build()
        .map_err(|e| RunError::Io(e.to_string()))?;
    let (files, warnings) = pool.install(|| compute_artifacts(cfg, opts.dt_override))?;

    let dir = match (&opts.out_dir, &cfg.output_dir) {
        (Some(d), _) => d.clone(),
        (None, Some(d)) => cfg.base_dir.join(d),
        (None, None) => PathBuf::from("out").join(cfg.kind().name()),
    };
    let mut entries = Vec::with_capacity(files.len());
    for a in &files {
        let path = dir.join(&a.path);
        if let Some(parent) = path.parent() {
            std::fs::create_dir_all(parent).map_err(|e| RunError::Io(format!("{}: {e}", parent.display())))?;
        }
        std::fs::write(&path, &a.bytes).map_err(|e| RunError::Io(format!("{}: {e}", path.display())))?;
        entries.push(ManifestEntry { path: a.path.clone(), sha256: sha256_hex(&a.bytes), bytes: a.bytes.len() });
    }
    std::fs::create_dir_all(&dir).map_err(|e| RunError::Io(format!("{}: {e}", dir.display())))?;
    let manifest = Manifest { scenario: cfg.kind().name().into(), config: cfg.normalized(), files: entries, warnings };
    let text = serde_json::to_string_pretty(&manifest).expect("manifest serializes") + "\n";
    std::fs::write(dir.join("manifest.json"), text).map_err(|e| RunError::Io(e.to_string()))?;
    Ok((dir, manifest))
}

#[derive(Default)]
struct Outputs {
    files: Vec<Artifact>,
    warnings: Vec<String>,
}

impl Outputs {
    fn text(&mut self, path: impl Into<String>, text: String) {
        self.files.push(Artifact { path: path.into(), bytes: text.into_bytes() });
    }

    fn json(&mut self, path: impl Into<String>, value: &impl Serialize) {
        let text = serde_json::to_string_pretty(value).expect("artifact serializes") + "\n";
        self.text(path, text);
    }

    fn spectrum(&mut self, stem: &str, s: &Spectrum) {
        self.text(format!("{stem}.csv"), spectrum_csv(s));
        self.json(format!("{stem}.json"), &spectrum_sidecar(&s.metadata, s));
    }
}

fn ghz_of(w: f64) -> f64 {
    w / TWO_PI * 1e-9
}

fn mhz_of(w: f64) -> f64 {
    w / TWO_PI * 1e-6
}

/// Spectrum CSV: omega_p_ghz, re_rc, im_rc, abs_rc.
pub fn spectrum_csv(s: &Spectrum) -> String {
    let mut out = String::from("omega_p_ghz,re_rc,im_rc,abs_rc\n");
    for (w, r) in s.probe_grid.iter().zip(&s.r_c) {
        let _ = writeln!(out, "{:e},{:e},{:e},{:e}", ghz_of(*w), r.re, r.im, r.norm());
    }
    out
}

fn spectrum_sidecar(meta: &SpectrumMeta, s: &Spectrum) -> Value {
    let mags = s.magnitudes();
    let dips: Vec<f64> = steady::find_dips(&s.probe_grid, &mags).into_iter().map(ghz_of).collect();
    json!({
        "system": meta.system,
        "provenance": meta.provenance,
        "points": s.len(),
        "dips_ghz": dips,
        "min_abs_rc": mags.iter().cloned().fold(f64::INFINITY, f64::min),
    })
}

/// Time-trace CSV: t_ns, re_a, im_a, re_b, im_b, re_aout, im_aout, v_out.
pub fn trace_csv(t: &TimeTrace) -> String {
    let mut out = String::from("t_ns,re_a,im_a,re_b,im_b,re_aout,im_aout,v_out\n");
    for k in 0..t.len() {
        let _ = writeln!(
            out,
            "{:e},{:e},{:e},{:e},{:e},{:e},{:e},{:e}",
            t.t[k] * 1e9,
            t.a[k].re,
            t.a[k].im,
            t.b[k].re,
            t.b[k].im,
            t.alpha_out[k].re,
            t.alpha_out[k].im,
            t.v_out[k]
        );
    }
    out
}

fn flux_arch(device: &model::DeviceParams, s: &crate::config::FluxArchScenario, out: &mut Outputs) -> Result<(), RunError> {
    let phis = s.flux.values(|f| f.phi0());
    let modes = s.modes.clone().unwrap_or_else(|| device.modes.iter().map(|m| m.n).collect());
    let samples: Vec<ModeSamples> = modes
        .iter()
        .map(|&n| {
            let omega = phis.iter().map(|&p| model::mode_frequency(n, p, device)).collect::<Result<Vec<_>, _>>()?;
            Ok(ModeSamples { n, phi: phis.clone(), omega })
        })
        .collect::<Result<_, model::ModelError>>()
        .map_err(num)?;
    let mut csv = String::from("mode,phi0,omega_ghz\n");
    for m in &samples {
        for (p, w) in m.phi.iter().zip(&m.omega) {
            let _ = writeln!(csv, "{},{:e},{:e}", m.n, p, ghz_of(*w));
        }
    }
    out.text("flux_arch.csv", csv);
    if s.fit {
        // Start 10% away from the generating circuit.
        let mut start = device.clone();
        start.i_c *= 1.1;
        start.d = (start.d * 0.9).clamp(0.0, 1.0);
        for m in &mut start.modes {
            m.l *= 1.1;
            m.c *= 0.9;
        }
        let LcRatio::Ohm2(r) = s.ratio_hint;
        let opts = fitting::FluxArchOptions { ratio_hint: r, reference_mode: Some(modes[0]) };
        let f = fitting::fit_flux_arch(&samples, &start, opts).map_err(num)?;
        out.warnings.extend(f.warnings.iter().cloned());
        out.json("flux_arch_fit.json", &flux_arch_json(&f));
    }
    Ok(())
}

fn flux_arch_json(f: &fitting::FluxArchFit) -> Value {
    let modes: Vec<Value> = f
        .modes
        .iter()
        .map(|&(n, l, c)| json!({"n": n, "l": {"nh": l * 1e9}, "c": {"pf": c * 1e12}, "bare_freq": {"ghz": ghz_of(1.0 / (l * c).sqrt())}}))
        .collect();
    json!({
        "model": "flux-arch",
        "i_c": {"ua": f.i_c * 1e6},
        "d": f.d,
        "modes": modes,
        "gauge": f.gauge,
        "warnings": f.warnings,
        "diagnostics": fit_diagnostics(&f.fit, "d, then (omega0_n rad/s, x_n) per mode"),
    })
}

fn fit_diagnostics(f: &FitResult, units: &str) -> Value {
    json!({
        "theta": f.theta,
        "theta_units": units,
        "std_errors": f.std_errors(),
        "covariance": f.covariance,
        "residual_norm": f.residual_norm,
        "initial_residual_norm": f.initial_residual_norm,
        "iterations": f.iterations,
        "converged": f.converged,
    })
}

fn splitting_map(device: &model::DeviceParams, s: &crate::config::SplittingMapScenario, out: &mut Outputs) -> Result<(), RunError> {
    let [lo, up] = s.pair;
    let mods = s.modulation.values(Freq::rad_s);
    // ω_Φ is replaced column by column; the first grid value only seeds the systems.
    let op = FluxOperatingPoint { phi_dc: s.phi_dc.phi0(), delta_phi: s.delta_phi.phi0(), omega_mod: mods[0] };
    let law = s.eta.law();
    let probe_lo = TwoModeSystem::from_device(device, &op, &law, lo, up).map_err(num)?;
    let probe_up = TwoModeSystem::from_device(device, &op, &law, up, lo).map_err(num)?;
    let grid_lo = s.probe_lower.values(Freq::rad_s);
    let grid_up = s.probe_upper.values(Freq::rad_s);
    let maps = steady::splitting_directions((&probe_lo, &grid_lo), (&probe_up, &grid_up), &mods).map_err(num)?;
    let mut summary = Vec::new();
    for (map, n, sys) in [(&maps[0], lo, &probe_lo), (&maps[1], up, &probe_up)] {
        let mut csv = String::from("omega_mod_ghz,omega_p_ghz,abs_rc\n");
        for (w, col) in map.omega_mod.iter().zip(&map.abs_rc) {
            for (p, v) in map.probe.iter().zip(col) {
                let _ = writeln!(csv, "{:e},{:e},{:e}", ghz_of(*w), ghz_of(*p), v);
            }
        }
        out.text(format!("map_probe_mode{n}.csv"), csv);
        summary.push(json!({
            "probed_mode": n,
            "system": sys,
            "branch_slopes": map.branch_slopes,
            "orientation": map.orientation(),
        }));
    }
    out.json("splitting_map.json", &json!({ "maps": summary }));
    Ok(())
}

struct SweepPoint {
    delta_phi: f64,
    system: TwoModeSystem,
    shift_true: f64,
    spectrum: Spectrum,
    fit: Option<fitting::LambdaFit>,
}

fn splitting_sweep(device: &model::DeviceParams, s: &crate::config::SplittingSweepScenario, out: &mut Outputs) -> Result<(), RunError> {
    let law = s.eta.law();
    let grid = s.probe.values(Freq::rad_s);
    let bare3 = model::mode_frequency(s.probed, s.phi_dc.phi0(), device).map_err(num)?;
    let points: Vec<SweepPoint> = s
        .delta_phi
        .values(|f| f.phi0())
        .par_iter()
        .map(|&dphi| {
            let op = FluxOperatingPoint { phi_dc: s.phi_dc.phi0(), delta_phi: dphi, omega_mod: s.omega_mod.rad_s() };
            let system = TwoModeSystem::from_device(device, &op, &law, s.probed, s.partner).map_err(num)?;
            let mut spectrum = steady::spectrum_sweep(&system, &grid).map_err(num)?;
            spectrum.metadata.provenance = format!("splitting-sweep delta_phi = {dphi:e} phi0");
            let fit = if s.fit && dphi > 0.0 {
                let fixed = LambdaFixed {
                    kappa_tot2: system.kappa_tot2,
                    kappa_tot3: system.kappa_tot3,
                    kappa_ext3: system.kappa_ext3,
                };
                let start = LambdaParams { g: model::coupling_strength(dphi, &law), delta2: 0.0, omega3_shifted: bare3, amplitude: 1.0 };
                Some(fitting::fit_lambda(&spectrum, fixed, start, LambdaOptions::default()).map_err(num)?)
            } else {
                None
            };
            Ok(SweepPoint { delta_phi: dphi, system, shift_true: system.omega3_shifted - bare3, spectrum, fit })
        })
        .collect::<Result<_, RunError>>()?;

    let mut csv = String::from("delta_phi0,g_true_mhz,shift_true_mhz,g_fit_mhz,delta2_fit_mhz,omega3_fit_ghz,shift_fit_mhz\n");
    for (i, p) in points.iter().enumerate() {
        out.spectrum(&format!("spectra/spectrum_{i:03}"), &p.spectrum);
        let (g, d2, w3, sh) = match &p.fit {
            Some(f) => (
                format!("{:e}", mhz_of(f.params.g)),
                format!("{:e}", mhz_of(f.params.delta2)),
                format!("{:e}", ghz_of(f.params.omega3_shifted)),
                format!("{:e}", mhz_of(f.params.omega3_shifted - bare3)),
            ),
            None => Default::default(),
        };
        let _ = writeln!(csv, "{:e},{:e},{:e},{g},{d2},{w3},{sh}", p.delta_phi, mhz_of(p.system.g), mhz_of(p.shift_true));
        if let Some(f) = &p.fit {
            out.warnings.extend(f.warnings.iter().map(|w| format!("delta_phi = {:e}: {w}", p.delta_phi)));
        }
    }
    out.text("sweep.csv", csv);

    let fitted: Vec<(f64, &fitting::LambdaFit)> = points.iter().filter_map(|p| p.fit.as_ref().map(|f| (p.delta_phi, f))).collect();
    if fitted.len() >= 4 {
        let g_pts: Vec<(f64, f64)> = fitted.iter().map(|(x, f)| (*x, f.params.g)).collect();
        let sh_pts: Vec<(f64, f64)> = fitted.iter().map(|(x, f)| (*x, f.params.omega3_shifted - bare3)).collect();
        let lin = fitting::fit_scaling(&g_pts, 1).map_err(num)?;
        let quad = fitting::fit_scaling(&sh_pts, 2).map_err(num)?;
        let h = 1e-3;
        let phi = s.phi_dc.phi0();
        let w = |p: f64| model::mode_frequency(s.probed, p, device);
        let curv = (w(phi + h).map_err(num)? - 2.0 * bare3 + w(phi - h).map_err(num)?) / (h * h);
        out.json(
            "scaling.json",
            &json!({
                "g_linear": {
                    "slope": {"ghz_per_phi0": lin.coefficient / TWO_PI * 1e-9},
                    "std_error": {"ghz_per_phi0": lin.std_error / TWO_PI * 1e-9},
                    "relative_residual": lin.relative_residual,
                    "law_slope": {"ghz_per_phi0": law.eta / TWO_PI * 1e-9},
                },
                "shift_quadratic": {
                    "coefficient": {"ghz_per_phi0_sq": quad.coefficient / TWO_PI * 1e-9},
                    "std_error": {"ghz_per_phi0_sq": quad.std_error / TWO_PI * 1e-9},
                    "relative_residual": quad.relative_residual,
                    "curvature_quarter": {"ghz_per_phi0_sq": curv / 4.0 / TWO_PI * 1e-9},
                },
            }),
        );
    } else if s.fit {
        out.warnings.push("fewer than 4 fitted columns with delta_phi > 0; scaling fits skipped".into());
    }
    Ok(())
}

fn trace_meta_json(t: &TimeTrace) -> Value {
    json!({
        "system": t.metadata.system,
        "schedule": t.metadata.schedule,
        "drive": t.metadata.drive,
        "dt_s": t.metadata.dt,
        "boundaries": t.metadata.boundaries,
        "samples": t.len(),
    })
}

fn beating(
    device: &model::DeviceParams,
    s: &crate::config::BeatingScenario,
    dt_override: Option<f64>,
    out: &mut Outputs,
) -> Result<(), RunError> {
    let sys = s.system.resolve(device).map_err(num)?.system;
    let drive = s.drive.spec();
    let span = (s.start.seconds(), s.stop.seconds());
    let schedule = ModulationSchedule::always_on(sys.g, span);
    let dt = dt_override
        .or(s.dt.map(|t| t.seconds()))
        .unwrap_or_else(|| dynamics::default_dt(&sys, &schedule, &drive));
    let trace = dynamics::integrate(&sys, &schedule, &drive, span, dt).map_err(num)?;
    let window = match s.window {
        Some([a, b]) => (a.seconds(), b.seconds()),
        None => (pulse_peak(&drive).unwrap_or(span.0).max(span.0), span.1),
    };
    let metrics = match dynamics::beating_metrics(&trace, window) {
        Ok(m) => Some(m),
        Err(e @ dynamics::DynamicsError::InsufficientPeaks { .. }) => {
            out.warnings.push(e.to_string());
            None
        }
        Err(e) => return Err(num(e)),
    };
    let energy = dynamics::energy_balance(&trace, &sys);
    out.text("trace.csv", trace_csv(&trace));
    out.json(
        "beating.json",
        &json!({
            "trace": trace_meta_json(&trace),
            "window_ns": [window.0 * 1e9, window.1 * 1e9],
            "metrics": metrics,
            "beat_period_ns": metrics.map(|m| m.beat_period * 1e9),
            "dressed_period_ns": if sys.g > 0.0 { Some(std::f64::consts::PI / sys.g * 1e9) } else { None },
            "energy": energy,
        }),
    );
    Ok(())
}

fn pulse_peak(drive: &DriveSpec) -> Option<f64> {
    match drive.envelope {
        Envelope::Gaussian { t0, .. } => Some(t0),
        Envelope::ContinuousWave => None,
    }
}

struct MemoryPoint {
    t_s: f64,
    trace: TimeTrace,
    peak: Option<(f64, f64)>,
}

fn memory(
    device: &model::DeviceParams,
    s: &crate::config::MemoryScenario,
    dt_override: Option<f64>,
    out: &mut Outputs,
) -> Result<(), RunError> {
    let resolved = s.system.resolve(device).map_err(num)?;
    let sys = resolved.system;
    let drive = s.drive.spec();
    let start = s.start.seconds();
    let probe_protocol = |t_off: f64, t_s: f64| MemoryProtocol {
        g_on: sys.g,
        shift_on: resolved.shifts,
        toggle_shifts: s.toggle_shifts,
        t_off,
        t_s,
    };
    let rate_schedule = ModulationSchedule::storage(&probe_protocol(start + 1e-9, 1e-9), (start, start + 3e-9));
    let dt = dt_override
        .or(s.dt.map(|t| t.seconds()))
        .unwrap_or_else(|| dynamics::default_dt(&sys, &rate_schedule, &drive));

    let t_off = match s.t_off {
        Some(t) => t.seconds(),
        None => {
            if !(sys.g > 0.0) {
                return Err(RunError::Numerical("t_off cannot be located with g = 0; set t_off explicitly".into()));
            }
            let after = match drive.envelope {
                Envelope::Gaussian { t0, tau_d } => t0 + 2.0 * tau_d,
                Envelope::ContinuousWave => start,
            };
            let horizon = after + 4.0 * std::f64::consts::PI / sys.g;
            let sched = ModulationSchedule::always_on(sys.g, (start, horizon));
            let tr = dynamics::integrate(&sys, &sched, &drive, (start, horizon), dt).map_err(num)?;
            dynamics::transfer_minimum(&tr, after)
                .ok_or_else(|| RunError::Numerical("no transfer minimum of |a| found after the pulse".into()))?
        }
    };

    let points: Vec<MemoryPoint> = s
        .storage_time
        .values(Time::seconds)
        .par_iter()
        .map(|&t_s| {
            let span = (start, t_off + t_s + s.retrieval.seconds());
            let trace = dynamics::memory_sequence(&sys, &drive, &probe_protocol(t_off, t_s), span, dt).map_err(num)?;
            let peak = dynamics::first_maximum_after(&trace, t_off + t_s);
            Ok(MemoryPoint { t_s, trace, peak })
        })
        .collect::<Result<_, RunError>>()?;

    let base = points.first().and_then(|p| p.peak.map(|x| (p.t_s, x.1)));
    let mut csv = String::from("t_s_ns,t_off_ns,retrieved_peak_ns,retrieved_peak,relative_peak,expected_relative\n");
    let mut sidecar = Vec::new();
    for (i, p) in points.iter().enumerate() {
        out.text(format!("traces/trace_{i:03}.csv"), trace_csv(&p.trace));
        let (tp, vp, rel) = match (p.peak, base) {
            (Some((t, v)), Some((_, b))) => (format!("{:e}", t * 1e9), format!("{v:e}"), format!("{:e}", v / b)),
            _ => {
                out.warnings.push(format!("no retrieved maximum found for T_s = {:e} s", p.t_s));
                Default::default()
            }
        };
        let expected = base.map_or(String::new(), |(t0, _)| format!("{:e}", (-sys.kappa_tot2 * (p.t_s - t0) / 2.0).exp()));
        let _ = writeln!(csv, "{:e},{:e},{tp},{vp},{rel},{expected}", p.t_s * 1e9, t_off * 1e9);
        sidecar.push(json!({ "file": format!("traces/trace_{i:03}.csv"), "t_s_ns": p.t_s * 1e9, "trace": trace_meta_json(&p.trace) }));
    }
    out.text("memory.csv", csv);
    out.json("memory.json", &json!({ "t_off_ns": t_off * 1e9, "dt_s": dt, "points": sidecar }));
    Ok(())
}

fn data_error(ptr: &str, msg: impl Into<String>) -> RunError {
    RunError::Config(ConfigError::Invalid(vec![Violation::new(ptr, msg)]))
}

/// Numeric rows of a comma-separated file. A first line that does not parse
/// as numbers is taken as the header.
pub fn read_csv(path: &Path) -> Result<(Option<Vec<String>>, Vec<Vec<f64>>), String> {
    let text = std::fs::read_to_string(path).map_err(|e| format!("{}: {e}", path.display()))?;
    let mut header = None;
    let mut rows = Vec::new();
    for (i, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let fields: Vec<&str> = line.split(',').map(str::trim).collect();
        let parsed: Result<Vec<f64>, _> = fields.iter().map(|f| f.parse::<f64>()).collect();
        match parsed {
            Ok(v) => rows.push(v),
            Err(_) if header.is_none() && rows.is_empty() => {
                header = Some(fields.iter().map(|s| s.to_string()).collect());
            }
            Err(_) => return Err(format!("{}: line {}: non-numeric field", path.display(), i + 1)),
        }
    }
    if let Some(w) = rows.first().map(Vec::len) {
        if let Some(bad) = rows.iter().position(|r| r.len() != w) {
            return Err(format!("{}: row {} has {} fields, expected {w}", path.display(), bad + 1, rows[bad].len()));
        }
    }
    Ok((header, rows))
}

/// Reads a spectrum CSV (four columns) or a generic two-column
/// (omega_p_ghz, abs_rc) file. Returns the spectrum and whether phase is present.
pub fn read_spectrum(path: &Path) -> Result<(Spectrum, bool), String> {
    let (_, rows) = read_csv(path)?;
    let width = rows.first().map_or(0, Vec::len);
    let (grid, r_c, phase) = match width {
        4 => (
            rows.iter().map(|r| r[0] * 1e9 * TWO_PI).collect::<Vec<_>>(),
            rows.iter().map(|r| C64::new(r[1], r[2])).collect::<Vec<_>>(),
            true,
        ),
        2 => (
            rows.iter().map(|r| r[0] * 1e9 * TWO_PI).collect(),
            rows.iter().map(|r| C64::new(r[1], 0.0)).collect(),
            false,
        ),
        _ => return Err(format!("{}: expected 2 or 4 columns, found {width}", path.display())),
    };
    steady::check_grid(&grid).map_err(|e| format!("{}: {e}", path.display()))?;
    let meta = SpectrumMeta {
        system: TwoModeSystem::reference(0.0),
        provenance: format!("read from {}", path.display()),
    };
    Ok((Spectrum { probe_grid: grid, r_c, metadata: meta }, phase))
}

fn fit(cfg: &ScenarioConfig, spec: &FitSpec, out: &mut Outputs) -> Result<(), RunError> {
    let path = cfg.resolve_path(spec.data_path());
    match spec {
        FitSpec::SingleMode { initial, data_mode, .. } => {
            let (spectrum, phase) = read_spectrum(&path).map_err(|e| data_error("/fit/single_mode/data", e))?;
            if *data_mode == DataMode::Complex && !phase {
                return Err(data_error("/fit/single_mode/data_mode", "complex fitting needs a four-column spectrum CSV"));
            }
            let theta0 = SingleModeParams {
                omega_r: initial.omega_r.rad_s(),
                kappa_tot: initial.kappa_tot.rad_s(),
                kappa_ext: initial.kappa_ext.rad_s(),
            };
            let f = fitting::fit_single_mode(&spectrum, theta0, *data_mode).map_err(num)?;
            out.warnings.extend(f.warnings.iter().cloned());
            let se = f.fit.std_errors();
            let params = |p: &SingleModeParams| {
                json!({
                    "omega_r": {"ghz": ghz_of(p.omega_r)},
                    "kappa_tot": {"mhz": mhz_of(p.kappa_tot)},
                    "kappa_ext": {"mhz": mhz_of(p.kappa_ext)},
                })
            };
            out.json(
                "fit.json",
                &json!({
                    "model": "single-mode",
                    "data_mode": data_mode,
                    "params": params(&f.params),
                    "std_errors": {
                        "omega_r": {"mhz": mhz_of(se[0])},
                        "kappa_tot": {"mhz": mhz_of(se[1])},
                        "kappa_ext": {"mhz": mhz_of(se[2])},
                    },
                    "mirror": f.mirror.as_ref().map(params),
                    "mirror_residual_norm": f.mirror_residual,
                    "warnings": f.warnings,
                    "diagnostics": fit_diagnostics(&f.fit, "fitted (omega_r, kappa_tot, kappa_ext) in rad/s"),
                }),
            );
        }
        FitSpec::Lambda { fixed, initial, data_mode, fit_amplitude, .. } => {
            let (spectrum, phase) = read_spectrum(&path).map_err(|e| data_error("/fit/lambda/data", e))?;
            if *data_mode == DataMode::Complex && !phase {
                return Err(data_error("/fit/lambda/data_mode", "complex fitting needs a four-column spectrum CSV"));
            }
            let fixed = LambdaFixed {
                kappa_tot2: fixed.kappa_tot2.rad_s(),
                kappa_tot3: fixed.kappa_tot3.rad_s(),
                kappa_ext3: fixed.kappa_ext3.rad_s(),
            };
            let theta0 = LambdaParams {
                g: initial.g.rad_s(),
                delta2: initial.delta2.rad_s(),
                omega3_shifted: initial.omega3.rad_s(),
                amplitude: 1.0,
            };
            let opts = LambdaOptions { data: *data_mode, fit_amplitude: *fit_amplitude };
            let f = fitting::fit_lambda(&spectrum, fixed, theta0, opts).map_err(num)?;
            out.warnings.extend(f.warnings.iter().cloned());
            let se = f.fit.std_errors();
            out.json(
                "fit.json",
                &json!({
                    "model": "lambda",
                    "data_mode": data_mode,
                    "params": {
                        "g": {"mhz": mhz_of(f.params.g)},
                        "delta2": {"mhz": mhz_of(f.params.delta2)},
                        "omega3": {"ghz": ghz_of(f.params.omega3_shifted)},
                        "amplitude": f.params.amplitude,
                    },
                    "std_errors": {
                        "g": {"mhz": mhz_of(se[0])},
                        "delta2": {"mhz": mhz_of(se[1])},
                        "omega3": {"mhz": mhz_of(se[2])},
                    },
                    "warnings": f.warnings,
                    "diagnostics": fit_diagnostics(&f.fit, "fitted (g, delta2, omega3[, amplitude]) in rad/s"),
                }),
            );
        }
        FitSpec::FluxArch { initial, ratio_hint, reference_mode, .. } => {
            let (_, rows) = read_csv(&path).map_err(|e| data_error("/fit/flux_arch/data", e))?;
            if rows.first().map_or(true, |r| r.len() != 3) {
                return Err(data_error("/fit/flux_arch/data", "expected columns mode, phi0, omega_ghz"));
            }
            let mut samples: Vec<ModeSamples> = Vec::new();
            for r in &rows {
                let n = r[0] as u32;
                let idx = match samples.iter().position(|s| s.n == n) {
                    Some(i) => i,
                    None => {
                        samples.push(ModeSamples { n, phi: Vec::new(), omega: Vec::new() });
                        samples.len() - 1
                    }
                };
                samples[idx].phi.push(r[1]);
                samples[idx].omega.push(r[2] * 1e9 * TWO_PI);
            }
            let start = initial.resolve(&cfg.base_dir)?;
            let LcRatio::Ohm2(r) = *ratio_hint;
            let opts = fitting::FluxArchOptions { ratio_hint: r, reference_mode: *reference_mode };
            let f = fitting::fit_flux_arch(&samples, &start, opts).map_err(num)?;
            out.warnings.extend(f.warnings.iter().cloned());
            out.json("fit.json", &flux_arch_json(&f));
        }
        FitSpec::Polynomial { order, .. } => {
            let (_, rows) = read_csv(&path).map_err(|e| data_error("/fit/polynomial/data", e))?;
            if rows.first().map_or(true, |r| r.len() != 2) {
                return Err(data_error("/fit/polynomial/data", "expected two columns x, y"));
            }
            let pts: Vec<(f64, f64)> = rows.iter().map(|r| (r[0], r[1])).collect();
            let f = fitting::fit_scaling(&pts, *order).map_err(num)?;
            out.json("fit.json", &json!({ "model": "polynomial", "result": f }));
        }
    }
    Ok(())
}

/// Runs `cfg` only if it describes `expected`.
pub fn run_checked(cfg: &ScenarioConfig, expected: ScenarioKind, opts: &RunOptions) -> Result<(PathBuf, Manifest), RunError> {
    if cfg.kind() != expected {
        return Err(ConfigError::Mismatch { expected, found: cfg.kind() }.into());
    }
    run_scenario(cfg, opts)
}
