//! Acceptance checks, one line per criterion. Runs without the libtest
//! harness so the report is printed even when everything passes.

use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Instant;

use num_complex::Complex64 as C64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use paramode::config::ScenarioConfig;
use paramode::constants::{ghz, mhz, reference as r, TWO_PI};
use paramode::dynamics::{self, DriveSpec, Envelope, ModulationSchedule};
use paramode::fitting::{
    self, fit_flux_arch, fit_lambda, fit_scaling, fit_single_mode, least_squares, polynomial_problem, DataMode,
    FluxArchOptions, LambdaFixed, LambdaOptions, LambdaParams, ModeSamples, SingleModeParams,
};
use paramode::model::{self, CouplingLaw, DeviceParams, FluxOperatingPoint, ModeParams};
use paramode::scenario::{compute_artifacts, read_csv, run_scenario, RunOptions};
use paramode::steady::{self, linspace, spectrum_sweep, Spectrum};
use paramode::{PartnerSide, TwoModeSystem};

// Tolerances
const ORACLE_REL: f64 = 1e-10;
const ORACLE_RANDOM_SYSTEMS: usize = 1000;
const ORACLE_SECONDS: f64 = 1.0;
const DIP_DEPTH_ABS: f64 = 1e-6;
const BEAT_REL: f64 = 0.10;
const BEAT_SECONDS: f64 = 5.0;
const DECAY_REL: f64 = 0.05;
const STORAGE_TIMES_NS: [f64; 5] = [0.0, 25.0, 50.0, 100.0, 200.0];
const LINEAR_RESIDUAL: f64 = 1e-3;
const QUADRATIC_REL: f64 = 0.01;
const MAX_DELTA_PHI: f64 = 0.005;
const ENERGY_RESIDUAL: f64 = 1e-4;
const ENERGY_ORDER: (f64, f64) = (3.7, 4.3);
const FIT_REL: f64 = 1e-6;
const FIT_INSTANCES: usize = 50;
const FIT_PERTURBATION: f64 = 0.2;
const NOISE: f64 = 0.01;
const MC_REALIZATIONS: usize = 200;
const SE_FACTOR: f64 = 2.0;

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: String) -> Outcome {
    Outcome { pass, detail }
}

fn configs_dir() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs")
}

fn rel(a: f64, b: f64) -> f64 {
    (a - b).abs() / b.abs()
}

fn perturb(rng: &mut ChaCha8Rng, x: f64) -> f64 {
    x * (1.0 + rng.gen_range(-FIT_PERTURBATION..=FIT_PERTURBATION))
}

fn reference_drive() -> DriveSpec {
    DriveSpec {
        omega_p: ghz(r::PULSE_CARRIER_GHZ),
        power_dbm: r::PULSE_POWER_DBM,
        envelope: Envelope::Gaussian { t0: 25e-9, tau_d: r::PULSE_TAU_D },
    }
}

fn random_system(rng: &mut ChaCha8Rng) -> TwoModeSystem {
    let omega3 = ghz(rng.gen_range(4.0..8.0));
    let delta2 = mhz(rng.gen_range(-50.0..50.0));
    let partner = if rng.gen_bool(0.5) { PartnerSide::Below } else { PartnerSide::Above };
    let spacing = ghz(rng.gen_range(0.5..2.0));
    let (omega2, omega_mod) = match partner {
        PartnerSide::Below => (omega3 - spacing, spacing - delta2),
        PartnerSide::Above => (omega3 + spacing, spacing + delta2),
    };
    let kappa_tot3 = mhz(rng.gen_range(0.5..20.0));
    TwoModeSystem {
        omega3_shifted: omega3,
        omega2_shifted: omega2,
        kappa_tot3,
        kappa_tot2: mhz(rng.gen_range(0.5..20.0)),
        kappa_ext3: kappa_tot3 * rng.gen_range(0.05..1.0),
        g: mhz(rng.gen_range(0.0..30.0)),
        omega_mod,
        partner,
    }
}

fn oracle_error(sys: &TwoModeSystem, omega_p: f64) -> f64 {
    let numeric = steady::reflection_numeric(sys, omega_p).expect("numeric steady state");
    let closed = steady::reflection_closed_form(sys, omega_p);
    (numeric - closed).norm() / closed.norm()
}

fn criterion_1() -> Outcome {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let mut worst = 0.0f64;
    for _ in 0..ORACLE_RANDOM_SYSTEMS {
        let sys = random_system(&mut rng);
        let offset = mhz(rng.gen_range(-100.0..100.0));
        worst = worst.max(oracle_error(&sys, sys.omega3_shifted + offset));
    }
    let mut grid_points = 0;
    for g_mhz in [0.0, r::LINE_CUT_G_MHZ, r::MEMORY_G_MHZ] {
        for d2_mhz in [-3.0, 0.0, 1.5, 3.0] {
            let mut sys = TwoModeSystem::reference(mhz(g_mhz));
            sys.omega_mod -= mhz(d2_mhz);
            for w in linspace(sys.omega3_shifted - mhz(60.0), sys.omega3_shifted + mhz(60.0), 1201) {
                worst = worst.max(oracle_error(&sys, w));
                grid_points += 1;
            }
        }
    }
    let secs = start.elapsed().as_secs_f64();
    outcome(
        worst <= ORACLE_REL && secs < ORACLE_SECONDS,
        format!(
            "max relative |r_num - r_closed| = {worst:.2e} over {ORACLE_RANDOM_SYSTEMS} random systems + {grid_points} reference-grid points (tol {ORACLE_REL:e}); {secs:.3} s (limit {ORACLE_SECONDS} s)"
        ),
    )
}

fn criterion_2() -> Outcome {
    let sys = TwoModeSystem::reference(0.0);
    let depth = steady::reflection_closed_form(&sys, sys.omega3_shifted).norm();
    let oracle = (1.0 - 2.0 * r::KAPPA_EXT3_MHZ / r::KAPPA_TOT_MHZ[1].1).abs();
    let err = (depth - oracle).abs();
    outcome(
        err <= DIP_DEPTH_ABS,
        format!("|r_c| on resonance = {depth:.7}, |1 - 2 ke/kt| = {oracle:.7}, diff {err:.1e} (tol {DIP_DEPTH_ABS:e})"),
    )
}

fn criterion_3() -> Outcome {
    let g = mhz(r::LINE_CUT_G_MHZ);
    let sys = TwoModeSystem::reference(g);
    let w3 = sys.omega3_shifted;
    let s = spectrum_sweep(&sys, &linspace(w3 - mhz(40.0), w3 + mhz(40.0), 8001)).unwrap();
    let sep = steady::dip_separation(&s);
    let (lo, hi) = (2.0 * g - sys.kappa_tot3 / 2.0, 2.0 * g + sys.kappa_tot3 / 2.0);
    let to = |x: f64| x / TWO_PI / 1e6;
    outcome(
        sep >= lo && sep <= hi,
        format!("dip separation {:.4} MHz, window [{:.4}, {:.4}] MHz", to(sep), to(lo), to(hi)),
    )
}

fn criterion_4() -> Outcome {
    let start = Instant::now();
    let sys = TwoModeSystem::reference(mhz(r::MEMORY_G_MHZ));
    let drive = reference_drive();
    let span = (0.0, 200e-9);
    let schedule = ModulationSchedule::always_on(sys.g, span);
    let dt = dynamics::default_dt(&sys, &schedule, &drive);
    let trace = dynamics::integrate(&sys, &schedule, &drive, span, dt).unwrap();
    let period = dynamics::beating_metrics(&trace, (40e-9, 150e-9)).map(|m| m.beat_period);
    let secs = start.elapsed().as_secs_f64();
    let oracle = 1.0 / (2.0 * r::MEMORY_G_MHZ * 1e6);
    match period {
        Ok(p) => outcome(
            rel(p, oracle) <= BEAT_REL && secs < BEAT_SECONDS,
            format!(
                "beat period {:.4} ns vs 1/(2g/2pi) = {:.4} ns, rel {:.2e} (tol {BEAT_REL}); {secs:.3} s (limit {BEAT_SECONDS} s)",
                p * 1e9,
                oracle * 1e9,
                rel(p, oracle)
            ),
        ),
        Err(e) => outcome(false, format!("beating analysis failed: {e}")),
    }
}

fn criterion_5() -> Outcome {
    let cfg = ScenarioConfig::load(&configs_dir().join("fig5_memory.json")).unwrap();
    let (artifacts, _) = compute_artifacts(&cfg, None).unwrap();
    let csv = artifacts.iter().find(|a| a.path == "memory.csv").unwrap();
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("memory.csv");
    std::fs::write(&path, &csv.bytes).unwrap();
    let (_, rows) = read_csv(&path).unwrap();
    let kappa2 = mhz(r::KAPPA_TOT_MHZ[0].1);
    let mut worst = 0.0f64;
    let mut parts = Vec::new();
    let mut found = 0;
    for row in &rows {
        let t_s_ns = row[0];
        if !STORAGE_TIMES_NS.iter().any(|t| (t - t_s_ns).abs() < 1e-9) {
            continue;
        }
        found += 1;
        let expected = (-kappa2 * t_s_ns * 1e-9 / 2.0).exp();
        let e = rel(row[4], expected);
        worst = worst.max(e);
        parts.push(format!("{t_s_ns:.0}ns {:.4}/{expected:.4}", row[4]));
    }
    outcome(
        found == STORAGE_TIMES_NS.len() && worst <= DECAY_REL,
        format!("retrieved/expected: {}; worst rel {worst:.2e} (tol {DECAY_REL})", parts.join(", ")),
    )
}

fn criterion_6() -> Outcome {
    let device = DeviceParams::reference();
    let law = CouplingLaw::default();
    let phi = r::PHI_DC;
    let bare = model::mode_frequency(3, phi, &device).unwrap();
    let h = 1e-4;
    let curvature = (model::mode_frequency(3, phi + h, &device).unwrap() - 2.0 * bare
        + model::mode_frequency(3, phi - h, &device).unwrap())
        / (h * h);
    let grid = linspace(bare - mhz(60.0), bare + mhz(60.0), 1201);
    let mut g_pts = Vec::new();
    let mut shift_pts = Vec::new();
    for k in 1..=10 {
        let dphi = MAX_DELTA_PHI * k as f64 / 10.0;
        let op = FluxOperatingPoint { phi_dc: phi, delta_phi: dphi, omega_mod: ghz(r::OMEGA_MOD_GHZ) };
        let sys = TwoModeSystem::from_device(&device, &op, &law, 3, 2).unwrap();
        let s = spectrum_sweep(&sys, &grid).unwrap();
        let fixed = LambdaFixed { kappa_tot2: sys.kappa_tot2, kappa_tot3: sys.kappa_tot3, kappa_ext3: sys.kappa_ext3 };
        let start = LambdaParams { g: model::coupling_strength(dphi, &law), delta2: 0.0, omega3_shifted: bare, amplitude: 1.0 };
        let f = fit_lambda(&s, fixed, start, LambdaOptions::default()).unwrap();
        g_pts.push((dphi, f.params.g));
        shift_pts.push((dphi, f.params.omega3_shifted - bare));
    }
    let lin = fit_scaling(&g_pts, 1).unwrap();
    let quad = fit_scaling(&shift_pts, 2).unwrap();
    let quad_err = rel(quad.coefficient, curvature / 4.0);
    let per = |x: f64| x / TWO_PI * 1e-9;
    outcome(
        lin.relative_residual < LINEAR_RESIDUAL && quad_err <= QUADRATIC_REL,
        format!(
            "g slope {:.6} GHz/phi0, linear residual {:.2e} (tol {LINEAR_RESIDUAL:e}); shift coefficient {:.4} vs w''/4 = {:.4} GHz/phi0^2, rel {quad_err:.2e} (tol {QUADRATIC_REL})",
            per(lin.coefficient),
            lin.relative_residual,
            per(quad.coefficient),
            per(curvature / 4.0)
        ),
    )
}

fn relative_residual(trace: &dynamics::TimeTrace, sys: &TwoModeSystem) -> f64 {
    let e = dynamics::energy_balance(trace, sys);
    e.residual.abs() / e.in_energy
}

/// Ledger residual < tol at the default dt for the beating and storage
/// fixtures; convergence order measured on the beating fixture over dt, dt/2
/// and dt/4. The storage order is reported for information.
fn criterion_7() -> Outcome {
    let sys = TwoModeSystem::reference(mhz(r::MEMORY_G_MHZ));
    let drive = reference_drive();
    let span = (0.0, 200e-9);
    let schedule = ModulationSchedule::always_on(sys.g, span);
    let dt = dynamics::default_dt(&sys, &schedule, &drive);
    let beating: Vec<f64> = (0..3)
        .map(|k| {
            let trace = dynamics::integrate(&sys, &schedule, &drive, span, dt / 2f64.powi(k)).unwrap();
            relative_residual(&trace, &sys)
        })
        .collect();
    let orders = [(beating[0] / beating[1]).log2(), (beating[1] / beating[2]).log2()];

    let protocol = dynamics::MemoryProtocol { g_on: sys.g, shift_on: (0.0, 0.0), toggle_shifts: false, t_off: 39.27e-9, t_s: 50e-9 };
    let mem_dt = dynamics::default_dt(&sys, &ModulationSchedule::storage(&protocol, span), &drive);
    let storage: Vec<f64> = (0..2)
        .map(|k| {
            let trace = dynamics::memory_sequence(&sys, &drive, &protocol, span, mem_dt / 2f64.powi(k)).unwrap();
            relative_residual(&trace, &sys)
        })
        .collect();

    let in_range = |o: f64| o >= ENERGY_ORDER.0 && o <= ENERGY_ORDER.1;
    let pass = beating[0] < ENERGY_RESIDUAL && storage[0] < ENERGY_RESIDUAL && orders.iter().all(|&o| in_range(o));
    outcome(
        pass,
        format!(
            "beating residual {:.2e}/{:.2e}/{:.2e} at dt/dt2/dt4, order {:.2}, {:.2}; storage residual {:.2e} (order {:.2} at dt->dt/2); tol {ENERGY_RESIDUAL:e}, order in [{}, {}]",
            beating[0],
            beating[1],
            beating[2],
            orders[0],
            orders[1],
            storage[0],
            (storage[0] / storage[1]).log2(),
            ENERGY_ORDER.0,
            ENERGY_ORDER.1
        ),
    )
}

struct Recovery {
    worst: f64,
    failures: usize,
}

impl Recovery {
    fn new() -> Self {
        Recovery { worst: 0.0, failures: 0 }
    }

    fn add(&mut self, fitted: &[f64], truth: &[f64]) {
        let e = fitted.iter().zip(truth).map(|(a, b)| rel(*a, *b)).fold(0.0, f64::max);
        self.worst = self.worst.max(e);
        if !(e <= FIT_REL) {
            self.failures += 1;
        }
    }
}

/// Ratio of the empirical parameter scatter to the median reported standard
/// error, for each parameter.
fn scatter_ratios(estimates: &[Vec<f64>], errors: &[Vec<f64>]) -> Vec<f64> {
    let p = estimates[0].len();
    (0..p)
        .map(|j| {
            let xs: Vec<f64> = estimates.iter().map(|e| e[j]).collect();
            let mean = xs.iter().sum::<f64>() / xs.len() as f64;
            let sd = (xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (xs.len() - 1) as f64).sqrt();
            let mut se: Vec<f64> = errors.iter().map(|e| e[j]).collect();
            se.sort_by(f64::total_cmp);
            sd / se[se.len() / 2]
        })
        .collect()
}

fn ratios_ok(ratios: &[f64]) -> bool {
    ratios.iter().all(|&x| x >= 1.0 / SE_FACTOR && x <= SE_FACTOR)
}

fn fmt_ratios(r: &[f64]) -> String {
    r.iter().map(|x| format!("{x:.2}")).collect::<Vec<_>>().join("/")
}

fn single_mode_spectrum(p: &SingleModeParams) -> Spectrum {
    let sys = TwoModeSystem {
        omega3_shifted: p.omega_r,
        omega2_shifted: p.omega_r - ghz(1.0),
        kappa_tot3: p.kappa_tot,
        kappa_tot2: mhz(1.0),
        kappa_ext3: p.kappa_ext,
        g: 0.0,
        omega_mod: 0.0,
        partner: PartnerSide::Below,
    };
    spectrum_sweep(&sys, &linspace(p.omega_r - 8.0 * p.kappa_tot, p.omega_r + 8.0 * p.kappa_tot, 801)).unwrap()
}

fn sm_vec(p: &SingleModeParams) -> [f64; 3] {
    [p.omega_r, p.kappa_tot, p.kappa_ext]
}

fn single_mode_check(rng: &mut ChaCha8Rng) -> (bool, String) {
    let mut complex = Recovery::new();
    let mut magnitude = Recovery::new();
    for _ in 0..FIT_INSTANCES {
        let kt = mhz(rng.gen_range(2.0..10.0));
        let truth = SingleModeParams { omega_r: ghz(rng.gen_range(4.0..8.0)), kappa_tot: kt, kappa_ext: kt * rng.gen_range(0.1..0.9) };
        let s = single_mode_spectrum(&truth);
        let start = SingleModeParams {
            omega_r: perturb(rng, truth.omega_r),
            kappa_tot: perturb(rng, truth.kappa_tot),
            kappa_ext: perturb(rng, truth.kappa_ext),
        };
        let f = fit_single_mode(&s, start, DataMode::Complex).unwrap();
        complex.add(&sm_vec(&f.params), &sm_vec(&truth));
        // |r| alone cannot tell κe from κt − κe; the truth must be one of the two reported branches
        let f = fit_single_mode(&s, start, DataMode::Magnitude).unwrap();
        let primary = sm_vec(&f.params);
        let branch = match f.mirror {
            Some(m) if rel(m.kappa_ext, truth.kappa_ext) < rel(f.params.kappa_ext, truth.kappa_ext) => sm_vec(&m),
            _ => primary,
        };
        magnitude.add(&branch, &sm_vec(&truth));
    }
    let truth = SingleModeParams { omega_r: ghz(5.7284), kappa_tot: mhz(6.8857), kappa_ext: mhz(4.0874) };
    let clean = single_mode_spectrum(&truth);
    let noise = Normal::new(0.0, NOISE).unwrap();
    let (mut est, mut se) = (Vec::new(), Vec::new());
    for _ in 0..MC_REALIZATIONS {
        let mut s = clean.clone();
        for r in s.r_c.iter_mut() {
            *r += C64::new(noise.sample(rng), noise.sample(rng));
        }
        let f = fit_single_mode(&s, truth, DataMode::Complex).unwrap();
        est.push(sm_vec(&f.params).to_vec());
        se.push(f.fit.std_errors());
    }
    let ratios = scatter_ratios(&est, &se);
    let pass = complex.failures == 0 && magnitude.failures == 0 && ratios_ok(&ratios);
    (
        pass,
        format!(
            "single-mode: complex worst {:.1e} ({} fail), magnitude-branch worst {:.1e} ({} fail), sd/se {}",
            complex.worst,
            complex.failures,
            magnitude.worst,
            magnitude.failures,
            fmt_ratios(&ratios)
        ),
    )
}

fn lambda_fixed() -> LambdaFixed {
    LambdaFixed { kappa_tot2: mhz(4.6461), kappa_tot3: mhz(6.8857), kappa_ext3: mhz(4.0874) }
}

fn lambda_spectrum(p: &LambdaParams) -> Spectrum {
    let sys = fitting::lambda_system(p, &lambda_fixed());
    let w = p.omega3_shifted;
    spectrum_sweep(&sys, &linspace(w - mhz(60.0), w + mhz(60.0), 1201)).unwrap()
}

fn lambda_vec(p: &LambdaParams) -> [f64; 3] {
    [p.g, p.delta2, p.omega3_shifted]
}

fn lambda_check(rng: &mut ChaCha8Rng) -> (bool, String) {
    let mut rec = Recovery::new();
    for _ in 0..FIT_INSTANCES {
        let sign = if rng.gen_bool(0.5) { 1.0 } else { -1.0 };
        let truth = LambdaParams {
            g: mhz(rng.gen_range(4.0..12.0)),
            delta2: sign * mhz(rng.gen_range(0.5..3.0)),
            omega3_shifted: ghz(rng.gen_range(5.6..5.9)),
            amplitude: 1.0,
        };
        let s = lambda_spectrum(&truth);
        let start = LambdaParams {
            g: perturb(rng, truth.g),
            delta2: perturb(rng, truth.delta2),
            omega3_shifted: perturb(rng, truth.omega3_shifted),
            amplitude: 1.0,
        };
        let f = fit_lambda(&s, lambda_fixed(), start, LambdaOptions::default()).unwrap();
        rec.add(&lambda_vec(&f.params), &lambda_vec(&truth));
    }
    let truth = LambdaParams { g: mhz(6.6), delta2: mhz(1.5), omega3_shifted: ghz(5.7284), amplitude: 1.0 };
    let clean = lambda_spectrum(&truth);
    let noise = Normal::new(0.0, NOISE).unwrap();
    let (mut est, mut se) = (Vec::new(), Vec::new());
    for _ in 0..MC_REALIZATIONS {
        let mut s = clean.clone();
        for r in s.r_c.iter_mut() {
            *r *= 1.0 + noise.sample(rng) / r.norm();
        }
        let f = fit_lambda(&s, lambda_fixed(), truth, LambdaOptions::default()).unwrap();
        est.push(lambda_vec(&f.params).to_vec());
        se.push(f.fit.std_errors());
    }
    let ratios = scatter_ratios(&est, &se);
    (
        rec.failures == 0 && ratios_ok(&ratios),
        format!("lambda: worst {:.1e} ({} fail), sd/se {}", rec.worst, rec.failures, fmt_ratios(&ratios)),
    )
}

fn random_device(rng: &mut ChaCha8Rng) -> DeviceParams {
    let i_c = rng.gen_range(0.7e-6..1.3e-6);
    let d = rng.gen_range(0.05..0.3);
    let modes = r::MODE_FREQ_GHZ
        .iter()
        .map(|&(n, f)| {
            let ratio = if n == 3 { r::RATIO_HINT } else { rng.gen_range(1000.0..5000.0) };
            let w = ghz(f * rng.gen_range(0.95..1.05));
            let (l, c) = model::calibrate_lc(w, r::PHI_DC, ratio, i_c, d).unwrap();
            ModeParams { n, l, c, kappa_tot: mhz(5.0), kappa_ext: mhz(2.0) }
        })
        .collect();
    DeviceParams { i_c, d, modes }
}

fn arch_samples(dev: &DeviceParams) -> Vec<ModeSamples> {
    let phis = linspace(0.0, 0.45, 10);
    dev.modes
        .iter()
        .map(|m| ModeSamples {
            n: m.n,
            phi: phis.clone(),
            omega: phis.iter().map(|&p| model::mode_frequency(m.n, p, dev).unwrap()).collect(),
        })
        .collect()
}

fn device_vec(i_c: f64, d: f64, modes: &[(u32, f64, f64)]) -> Vec<f64> {
    let mut v = vec![i_c, d];
    for &(_, l, c) in modes {
        v.push(l);
        v.push(c);
    }
    v
}

fn flux_arch_check(rng: &mut ChaCha8Rng) -> (bool, String) {
    let mut rec = Recovery::new();
    for _ in 0..FIT_INSTANCES {
        let truth = random_device(rng);
        let data = arch_samples(&truth);
        let mut start = truth.clone();
        start.i_c = perturb(rng, start.i_c);
        start.d = perturb(rng, start.d);
        for m in start.modes.iter_mut() {
            m.l = perturb(rng, m.l);
            m.c = perturb(rng, m.c);
        }
        let f = fit_flux_arch(&data, &start, FluxArchOptions::default()).unwrap();
        let tm: Vec<(u32, f64, f64)> = truth.modes.iter().map(|m| (m.n, m.l, m.c)).collect();
        rec.add(&device_vec(f.i_c, f.d, &f.modes), &device_vec(truth.i_c, truth.d, &tm));
    }
    let truth = DeviceParams::reference();
    let clean = arch_samples(&truth);
    let noise = Normal::new(0.0, NOISE).unwrap();
    let (mut est, mut se) = (Vec::new(), Vec::new());
    for _ in 0..MC_REALIZATIONS {
        let mut data = clean.clone();
        for m in data.iter_mut() {
            m.omega.iter_mut().for_each(|w| *w *= 1.0 + noise.sample(rng));
        }
        let f = fit_flux_arch(&data, &truth, FluxArchOptions::default()).unwrap();
        est.push(f.fit.theta.clone());
        se.push(f.fit.std_errors());
    }
    let ratios = scatter_ratios(&est, &se);
    (
        rec.failures == 0 && ratios_ok(&ratios),
        format!("flux-arch: worst {:.1e} ({} fail), sd/se {}", rec.worst, rec.failures, fmt_ratios(&ratios)),
    )
}

fn polynomial_check(rng: &mut ChaCha8Rng) -> (bool, String) {
    let mut rec = Recovery::new();
    let xs = linspace(0.001, 0.02, 20);
    for k in 0..FIT_INSTANCES {
        let order = 1 + (k % 2) as u8;
        let c = rng.gen_range(0.5..2.0) * if order == 1 { ghz(1.0) } else { -ghz(7.7) };
        let pts: Vec<(f64, f64)> = xs.iter().map(|&x| (x, c * x.powi(order as i32))).collect();
        let f = least_squares(&polynomial_problem(&pts, order, perturb(rng, c))).unwrap();
        rec.add(&f.theta, &[c]);
        rec.add(&[fit_scaling(&pts, order).unwrap().coefficient], &[c]);
    }
    let noise = Normal::new(0.0, NOISE).unwrap();
    let mut ratios = Vec::new();
    for order in [1u8, 2] {
        let c = if order == 1 { ghz(1.0) } else { -ghz(7.7) };
        let scale = (c * 0.02f64.powi(order as i32)).abs();
        let (mut est, mut se, mut est_lm, mut se_lm) = (Vec::new(), Vec::new(), Vec::new(), Vec::new());
        for _ in 0..MC_REALIZATIONS {
            let pts: Vec<(f64, f64)> =
                xs.iter().map(|&x| (x, c * x.powi(order as i32) + scale * noise.sample(rng))).collect();
            let f = fit_scaling(&pts, order).unwrap();
            est.push(vec![f.coefficient]);
            se.push(vec![f.std_error]);
            let lm = least_squares(&polynomial_problem(&pts, order, c)).unwrap();
            est_lm.push(lm.theta.clone());
            se_lm.push(lm.std_errors());
        }
        ratios.extend(scatter_ratios(&est, &se));
        ratios.extend(scatter_ratios(&est_lm, &se_lm));
    }
    (
        rec.failures == 0 && ratios_ok(&ratios),
        format!("polynomial: worst {:.1e} ({} fail), sd/se {}", rec.worst, rec.failures, fmt_ratios(&ratios)),
    )
}

fn criterion_8() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let checks = [single_mode_check(&mut rng), lambda_check(&mut rng), flux_arch_check(&mut rng), polynomial_check(&mut rng)];
    let pass = checks.iter().all(|c| c.0);
    let detail = checks.iter().map(|c| c.1.as_str()).collect::<Vec<_>>().join("; ");
    outcome(
        pass,
        format!(
            "{detail} (tol {FIT_REL:e}, {FIT_INSTANCES} instances, starts +/-{:.0}%, sd/se within x{SE_FACTOR})",
            FIT_PERTURBATION * 100.0
        ),
    )
}

fn criterion_9() -> Outcome {
    let mut configs: Vec<PathBuf> = std::fs::read_dir(configs_dir())
        .unwrap()
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.file_name().and_then(|n| n.to_str()).is_some_and(|n| n.starts_with("fig") && n.ends_with(".json")))
        .collect();
    configs.sort();
    let many = std::thread::available_parallelism().map_or(4, |n| n.get().max(4));
    let mut mismatches = Vec::new();
    let mut compared = 0;
    for path in &configs {
        let cfg = ScenarioConfig::load(path).unwrap();
        let dirs = [tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap()];
        let mut manifests = dirs.iter().zip([1, many]).map(|(dir, threads)| {
            let opts = RunOptions { out_dir: Some(dir.path().to_path_buf()), threads: Some(threads), dt_override: None };
            run_scenario(&cfg, &opts).unwrap().1
        });
        let manifest = manifests.next().unwrap();
        manifests.for_each(drop);
        for f in manifest.files.iter().filter(|f| f.path.ends_with(".csv")) {
            compared += 1;
            let a = std::fs::read(dirs[0].path().join(&f.path)).unwrap();
            let b = std::fs::read(dirs[1].path().join(&f.path)).unwrap();
            if a != b {
                mismatches.push(format!("{}:{}", path.file_name().unwrap().to_string_lossy(), f.path));
            }
        }
    }
    outcome(
        mismatches.is_empty() && compared > 0,
        format!(
            "{} configs, {compared} CSV files identical at 1 vs {many} threads{}",
            configs.len(),
            if mismatches.is_empty() { String::new() } else { format!("; differ: {}", mismatches.join(", ")) }
        ),
    )
}

fn main() -> ExitCode {
    let criteria: [(&str, fn() -> Outcome); 9] = [
        ("oracle equivalence", criterion_1),
        ("single-mode dip depth", criterion_2),
        ("splitting magnitude", criterion_3),
        ("beating period", criterion_4),
        ("storage decay", criterion_5),
        ("scaling laws", criterion_6),
        ("energy balance", criterion_7),
        ("fit round trips", criterion_8),
        ("determinism", criterion_9),
    ];
    let mut failed = 0;
    for (i, (name, check)) in criteria.iter().enumerate() {
        let o = check();
        if !o.pass {
            failed += 1;
        }
        println!("criterion {} [{}] {name}: {}", i + 1, if o.pass { "PASS" } else { "FAIL" }, o.detail);
    }
    println!("acceptance: {}/{} passed", criteria.len() - failed, criteria.len());
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
