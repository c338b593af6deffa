//! C ABI over the `paramode` core.
//!
//! Objects are handed out as opaque pointers and released with the matching
//! `*_free` function. Every fallible call returns a [`PmStatus`]; on failure
//! [`pm_last_error`] describes what went wrong on the calling thread.
//! Frequencies and rates are angular (rad/s), times are seconds.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::PathBuf;

use paramode::config::ScenarioConfig;
use paramode::dynamics::{self, DriveSpec, Envelope, ModulationSchedule, TimeTrace};
use paramode::scenario::{run_scenario, RunOptions};
use paramode::steady::{self, Spectrum};
use paramode::{PartnerSide, TwoModeSystem};

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PmStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidArgument = 2,
    Numerical = 3,
    Config = 4,
    Io = 5,
    OutOfRange = 6,
    Panic = 7,
}

/// Probed/partner mode pair.
pub struct PmSystem(TwoModeSystem);

/// Reflection spectrum over a probe grid.
pub struct PmSpectrum(Spectrum);

/// Time-domain trace.
pub struct PmTrace(TimeTrace);

thread_local! {
    static LAST_ERROR: RefCell<CString> = RefCell::new(CString::default());
}

fn set_error(msg: impl Into<String>) {
    let s = msg.into().replace('\0', " ");
    LAST_ERROR.with(|e| *e.borrow_mut() = CString::new(s).unwrap_or_default());
}

fn fail(status: PmStatus, msg: impl Into<String>) -> PmStatus {
    set_error(msg);
    status
}

fn guard(f: impl FnOnce() -> PmStatus) -> PmStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(s) => {
            if s == PmStatus::Ok {
                set_error("");
            }
            s
        }
        Err(_) => fail(PmStatus::Panic, "internal panic"),
    }
}

unsafe fn deref<'a, T>(p: *const T, what: &str) -> Result<&'a T, PmStatus> {
    p.as_ref().ok_or_else(|| fail(PmStatus::NullPointer, format!("{what} is null")))
}

fn boxed<T>(v: T, out: *mut *mut T) -> PmStatus {
    // SAFETY: callers check `out` for null first.
    unsafe { *out = Box::into_raw(Box::new(v)) };
    PmStatus::Ok
}

macro_rules! out_ptr {
    ($p:expr) => {
        if $p.is_null() {
            return fail(PmStatus::NullPointer, concat!(stringify!($p), " is null"));
        }
    };
}

/// Message for the last failed call on this thread. Empty after a success.
/// The pointer stays valid until the next call into this library on the same
/// thread.
#[no_mangle]
pub extern "C" fn pm_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ptr())
}

/// Builds a system from explicit parameters. `partner_above` is nonzero when
/// the partner frame sits above the probed mode (ω̃2 − ω_Φ).
#[no_mangle]
pub extern "C" fn pm_system_new(
    omega3_shifted: f64,
    omega2_shifted: f64,
    kappa_tot3: f64,
    kappa_tot2: f64,
    kappa_ext3: f64,
    g: f64,
    omega_mod: f64,
    partner_above: i32,
    out: *mut *mut PmSystem,
) -> PmStatus {
    guard(|| {
        out_ptr!(out);
        let s = TwoModeSystem {
            omega3_shifted,
            omega2_shifted,
            kappa_tot3,
            kappa_tot2,
            kappa_ext3,
            g,
            omega_mod,
            partner: if partner_above != 0 { PartnerSide::Above } else { PartnerSide::Below },
        };
        let v = s.violations();
        if !v.is_empty() {
            return fail(PmStatus::InvalidArgument, v.join("; "));
        }
        boxed(PmSystem(s), out)
    })
}

/// The reference mode 3/mode 2 pair on resonance (Δ2 = 0) with coupling `g`.
#[no_mangle]
pub extern "C" fn pm_system_reference(g: f64, out: *mut *mut PmSystem) -> PmStatus {
    guard(|| {
        out_ptr!(out);
        if !(g >= 0.0 && g.is_finite()) {
            return fail(PmStatus::InvalidArgument, format!("g must be >= 0 (got {g})"));
        }
        boxed(PmSystem(TwoModeSystem::reference(g)), out)
    })
}

#[no_mangle]
pub extern "C" fn pm_system_delta2(system: *const PmSystem, out: *mut f64) -> PmStatus {
    guard(|| {
        out_ptr!(out);
        let s = match unsafe { deref(system, "system") } {
            Ok(s) => s,
            Err(e) => return e,
        };
        unsafe { *out = s.0.delta2() };
        PmStatus::Ok
    })
}

/// # Safety
/// `system` must come from `pm_system_*` and not be freed twice.
#[no_mangle]
pub unsafe extern "C" fn pm_system_free(system: *mut PmSystem) {
    if !system.is_null() {
        drop(Box::from_raw(system));
    }
}

/// Steady-state reflection coefficient at probe frequency `omega_p`.
#[no_mangle]
pub extern "C" fn pm_reflection(system: *const PmSystem, omega_p: f64, re: *mut f64, im: *mut f64) -> PmStatus {
    guard(|| {
        out_ptr!(re);
        out_ptr!(im);
        let s = match unsafe { deref(system, "system") } {
            Ok(s) => s,
            Err(e) => return e,
        };
        if !omega_p.is_finite() {
            return fail(PmStatus::InvalidArgument, "omega_p must be finite");
        }
        let r = steady::reflection_closed_form(&s.0, omega_p);
        if !(r.re.is_finite() && r.im.is_finite()) {
            return fail(PmStatus::Numerical, format!("reflection is not finite at omega_p = {omega_p}"));
        }
        unsafe {
            *re = r.re;
            *im = r.im;
        }
        PmStatus::Ok
    })
}

/// Sweeps the probe over `grid[0..len]`, which must be strictly increasing.
#[no_mangle]
pub extern "C" fn pm_spectrum_sweep(
    system: *const PmSystem,
    grid: *const f64,
    len: usize,
    out: *mut *mut PmSpectrum,
) -> PmStatus {
    guard(|| {
        out_ptr!(out);
        let s = match unsafe { deref(system, "system") } {
            Ok(s) => s,
            Err(e) => return e,
        };
        if grid.is_null() {
            return fail(PmStatus::NullPointer, "grid is null");
        }
        let grid = unsafe { std::slice::from_raw_parts(grid, len) };
        match steady::spectrum_sweep(&s.0, grid) {
            Ok(sp) => boxed(PmSpectrum(sp), out),
            Err(e) => fail(PmStatus::InvalidArgument, e.to_string()),
        }
    })
}

#[no_mangle]
pub extern "C" fn pm_spectrum_len(spectrum: *const PmSpectrum) -> usize {
    unsafe { spectrum.as_ref() }.map_or(0, |s| s.0.len())
}

#[no_mangle]
pub extern "C" fn pm_spectrum_get(
    spectrum: *const PmSpectrum,
    index: usize,
    omega_p: *mut f64,
    re: *mut f64,
    im: *mut f64,
) -> PmStatus {
    guard(|| {
        out_ptr!(omega_p);
        out_ptr!(re);
        out_ptr!(im);
        let s = match unsafe { deref(spectrum, "spectrum") } {
            Ok(s) => s,
            Err(e) => return e,
        };
        if index >= s.0.len() {
            return fail(PmStatus::OutOfRange, format!("index {index} >= length {}", s.0.len()));
        }
        unsafe {
            *omega_p = s.0.probe_grid[index];
            *re = s.0.r_c[index].re;
            *im = s.0.r_c[index].im;
        }
        PmStatus::Ok
    })
}

/// Separation of the two deepest |r| dips, rad/s; 0 when fewer than two.
#[no_mangle]
pub extern "C" fn pm_spectrum_dip_separation(spectrum: *const PmSpectrum, out: *mut f64) -> PmStatus {
    guard(|| {
        out_ptr!(out);
        let s = match unsafe { deref(spectrum, "spectrum") } {
            Ok(s) => s,
            Err(e) => return e,
        };
        unsafe { *out = steady::dip_separation(&s.0) };
        PmStatus::Ok
    })
}

/// # Safety
/// `spectrum` must come from [`pm_spectrum_sweep`] and not be freed twice.
#[no_mangle]
pub unsafe extern "C" fn pm_spectrum_free(spectrum: *mut PmSpectrum) {
    if !spectrum.is_null() {
        drop(Box::from_raw(spectrum));
    }
}

/// Integrates a Gaussian pulse (carrier `omega_p`, peak power `power_dbm`,
/// centre `t0`, width `tau_d`) with the modulation on throughout
/// `[t_start, t_stop]`. `dt <= 0` picks the default step.
#[no_mangle]
pub extern "C" fn pm_integrate_pulse(
    system: *const PmSystem,
    omega_p: f64,
    power_dbm: f64,
    t0: f64,
    tau_d: f64,
    t_start: f64,
    t_stop: f64,
    dt: f64,
    out: *mut *mut PmTrace,
) -> PmStatus {
    guard(|| {
        out_ptr!(out);
        let s = match unsafe { deref(system, "system") } {
            Ok(s) => s,
            Err(e) => return e,
        };
        let drive = DriveSpec { omega_p, power_dbm, envelope: Envelope::Gaussian { t0, tau_d } };
        let span = (t_start, t_stop);
        let schedule = ModulationSchedule::always_on(s.0.g, span);
        let dt = if dt > 0.0 { dt } else { dynamics::default_dt(&s.0, &schedule, &drive) };
        match dynamics::integrate(&s.0, &schedule, &drive, span, dt) {
            Ok(t) => boxed(PmTrace(t), out),
            Err(e @ dynamics::DynamicsError::NonFinite { .. }) => fail(PmStatus::Numerical, e.to_string()),
            Err(e) => fail(PmStatus::InvalidArgument, e.to_string()),
        }
    })
}

#[no_mangle]
pub extern "C" fn pm_trace_len(trace: *const PmTrace) -> usize {
    unsafe { trace.as_ref() }.map_or(0, |t| t.0.len())
}

/// Sample `index`: time, |α_out|, and the mode amplitudes a and b.
#[no_mangle]
pub extern "C" fn pm_trace_get(
    trace: *const PmTrace,
    index: usize,
    t: *mut f64,
    v_out: *mut f64,
    a_re: *mut f64,
    a_im: *mut f64,
    b_re: *mut f64,
    b_im: *mut f64,
) -> PmStatus {
    guard(|| {
        for p in [t, v_out, a_re, a_im, b_re, b_im] {
            out_ptr!(p);
        }
        let tr = match unsafe { deref(trace, "trace") } {
            Ok(s) => &s.0,
            Err(e) => return e,
        };
        if index >= tr.len() {
            return fail(PmStatus::OutOfRange, format!("index {index} >= length {}", tr.len()));
        }
        unsafe {
            *t = tr.t[index];
            *v_out = tr.v_out[index];
            *a_re = tr.a[index].re;
            *a_im = tr.a[index].im;
            *b_re = tr.b[index].re;
            *b_im = tr.b[index].im;
        }
        PmStatus::Ok
    })
}

/// Mean spacing of |α_out| maxima inside `[window_start, window_stop]`.
#[no_mangle]
pub extern "C" fn pm_trace_beat_period(
    trace: *const PmTrace,
    window_start: f64,
    window_stop: f64,
    out: *mut f64,
) -> PmStatus {
    guard(|| {
        out_ptr!(out);
        let tr = match unsafe { deref(trace, "trace") } {
            Ok(s) => &s.0,
            Err(e) => return e,
        };
        match dynamics::beating_metrics(tr, (window_start, window_stop)) {
            Ok(m) => {
                unsafe { *out = m.beat_period };
                PmStatus::Ok
            }
            Err(e) => fail(PmStatus::Numerical, e.to_string()),
        }
    })
}

/// # Safety
/// `trace` must come from [`pm_integrate_pulse`] and not be freed twice.
#[no_mangle]
pub unsafe extern "C" fn pm_trace_free(trace: *mut PmTrace) {
    if !trace.is_null() {
        drop(Box::from_raw(trace));
    }
}

/// Runs the scenario in the JSON file at `config_path`, writing artifacts to
/// `out_dir` (or the config's own output directory when null). `threads = 0`
/// uses all cores.
///
/// # Safety
/// The strings must be NUL-terminated and valid for the duration of the call.
#[no_mangle]
pub unsafe extern "C" fn pm_run_config(config_path: *const c_char, out_dir: *const c_char, threads: usize) -> PmStatus {
    guard(|| {
        if config_path.is_null() {
            return fail(PmStatus::NullPointer, "config_path is null");
        }
        let path = match CStr::from_ptr(config_path).to_str() {
            Ok(p) => PathBuf::from(p),
            Err(_) => return fail(PmStatus::InvalidArgument, "config_path is not UTF-8"),
        };
        let out = if out_dir.is_null() {
            None
        } else {
            match CStr::from_ptr(out_dir).to_str() {
                Ok(p) => Some(PathBuf::from(p)),
                Err(_) => return fail(PmStatus::InvalidArgument, "out_dir is not UTF-8"),
            }
        };
        let cfg = match ScenarioConfig::load(&path) {
            Ok(c) => c,
            Err(e) => return fail(PmStatus::Config, e.to_string()),
        };
        let opts = RunOptions { out_dir: out, threads: (threads > 0).then_some(threads), dt_override: None };
        match run_scenario(&cfg, &opts) {
            Ok(_) => PmStatus::Ok,
            Err(e) => {
                let status = match e.exit_code() {
                    2 => PmStatus::Config,
                    3 => PmStatus::Numerical,
                    _ => PmStatus::Io,
                };
                fail(status, e.to_string())
            }
        }
    })
}
