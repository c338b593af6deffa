//! Parameter extraction from spectra and sweeps.
//!
//! [`least_squares`] is a Levenberg–Marquardt solver with finite-difference
//! Jacobians and box bounds; the model fits ([`fit_single_mode`],
//! [`fit_lambda`], [`fit_flux_arch`]) wrap it with data-driven starting
//! points. [`fit_scaling`] is closed form.

use std::f64::consts::PI;

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64 as C64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::constants::PHI0;
use crate::model::{DeviceParams, ModeParams, ModelError};
use crate::steady::{deepest_dips, reflection_closed_form, Spectrum};
use crate::system::{PartnerSide, TwoModeSystem};

/// Upper bound on Jacobian evaluations.
pub const MAX_ITERATIONS: usize = 200;
/// Relative step size below which an iteration counts as converged.
pub const STEP_TOL: f64 = 1e-10;
/// Relative central-difference step.
pub const FD_STEP: f64 = 1e-6;

const I: C64 = C64 { re: 0.0, im: 1.0 };

#[derive(Debug, Clone, PartialEq, Error)]
pub enum FitError {
    #[error("invalid fit problem: {0}")]
    InvalidProblem(String),
    #[error("forward model returned {got} values, expected {expected}")]
    ModelLength { got: usize, expected: usize },
    #[error("forward model is not finite at the starting point")]
    NonFiniteStart,
    #[error("rank-deficient design: {0}")]
    RankDeficient(String),
    #[error(transparent)]
    Model(#[from] ModelError),
}

pub type Result<T> = std::result::Result<T, FitError>;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ModelKind {
    SingleMode,
    Lambda,
    FluxArch,
    Polynomial,
}

/// Maps a parameter vector to predictions, one per observation.
pub type Forward<'a> = dyn Fn(&[f64]) -> Vec<f64> + Sync + 'a;

pub struct FitProblem<'a> {
    pub model: ModelKind,
    /// Abscissae, kept for reporting; the forward model closes over its own.
    pub x: Vec<f64>,
    pub y: Vec<f64>,
    pub theta0: Vec<f64>,
    pub bounds: Vec<(f64, f64)>,
    pub weights: Option<Vec<f64>>,
    /// Typical magnitude per parameter. Sets the finite-difference step and
    /// convergence scale when a parameter starts at or near zero.
    pub typical: Option<Vec<f64>>,
    pub forward: Box<Forward<'a>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitResult {
    pub model: ModelKind,
    pub theta: Vec<f64>,
    /// Final weighted sum of squared residuals.
    pub residual_norm: f64,
    pub initial_residual_norm: f64,
    /// s²·(JᵀWJ)⁺ with s² = SSR/(m − p).
    pub covariance: Vec<Vec<f64>>,
    pub iterations: usize,
    pub converged: bool,
    /// Sum of squares after each accepted step, starting at theta0.
    pub history: Vec<f64>,
}

impl FitResult {
    pub fn std_errors(&self) -> Vec<f64> {
        (0..self.theta.len()).map(|i| self.covariance[i][i].max(0.0).sqrt()).collect()
    }
}

impl<'a> FitProblem<'a> {
    fn validate(&self) -> Result<()> {
        let p = self.theta0.len();
        let m = self.y.len();
        let bad = |s: String| Err(FitError::InvalidProblem(s));
        if p == 0 {
            return bad("no parameters".into());
        }
        if m < p + 1 {
            return bad(format!("{m} observations for {p} parameters; need at least {}", p + 1));
        }
        if self.bounds.len() != p {
            return bad(format!("{} bounds for {p} parameters", self.bounds.len()));
        }
        for (j, (&t, &(lo, hi))) in self.theta0.iter().zip(&self.bounds).enumerate() {
            if !(lo <= hi) {
                return bad(format!("bounds[{j}] = ({lo}, {hi}) is empty"));
            }
            if !(t >= lo && t <= hi) {
                return bad(format!("theta0[{j}] = {t} lies outside ({lo}, {hi})"));
            }
        }
        if let Some(w) = &self.weights {
            if w.len() != m {
                return bad(format!("{} weights for {m} observations", w.len()));
            }
            if w.iter().any(|w| !(w.is_finite() && *w >= 0.0)) {
                return bad("weights must be finite and non-negative".into());
            }
        }
        if let Some(t) = &self.typical {
            if t.len() != p || t.iter().any(|t| !(t.is_finite() && *t > 0.0)) {
                return bad("typical magnitudes must be positive, one per parameter".into());
            }
        }
        if self.y.iter().any(|y| !y.is_finite()) {
            return bad("observations must be finite".into());
        }
        Ok(())
    }

    fn residuals(&self, theta: &[f64]) -> Result<Vec<f64>> {
        let f = (self.forward)(theta);
        if f.len() != self.y.len() {
            return Err(FitError::ModelLength { got: f.len(), expected: self.y.len() });
        }
        Ok(match &self.weights {
            Some(w) => f.iter().zip(&self.y).zip(w).map(|((f, y), w)| w * (f - y)).collect(),
            None => f.iter().zip(&self.y).map(|(f, y)| f - y).collect(),
        })
    }

    /// Central differences in the scaled coordinates u = θ/s.
    fn jacobian(&self, theta: &[f64], scale: &[f64]) -> Result<DMatrix<f64>> {
        let m = self.y.len();
        let p = theta.len();
        let mut jac = DMatrix::zeros(m, p);
        let mut probe = theta.to_vec();
        for j in 0..p {
            let (lo, hi) = self.bounds[j];
            let h = FD_STEP * theta[j].abs().max(scale[j]);
            let tp = (theta[j] + h).min(hi);
            let tm = (theta[j] - h).max(lo);
            if tp == tm {
                continue;
            }
            probe[j] = tp;
            let rp = self.residuals(&probe)?;
            probe[j] = tm;
            let rm = self.residuals(&probe)?;
            probe[j] = theta[j];
            let inv = scale[j] / (tp - tm);
            for i in 0..m {
                let d = (rp[i] - rm[i]) * inv;
                jac[(i, j)] = if d.is_finite() { d } else { 0.0 };
            }
        }
        Ok(jac)
    }
}

fn sum_sq(r: &[f64]) -> f64 {
    r.iter().map(|x| x * x).sum()
}

fn clamp_to(theta: &mut [f64], bounds: &[(f64, f64)]) {
    for (t, &(lo, hi)) in theta.iter_mut().zip(bounds) {
        *t = t.clamp(lo, hi);
    }
}

/// Damped Gauss–Newton with Marquardt's diagonal scaling.
///
/// A trial step is accepted when it does not increase the sum of squares.
/// Iteration stops when a step is smaller than [`STEP_TOL`] relative to the
/// parameter scale, or after [`MAX_ITERATIONS`] Jacobians; the latter is
/// reported through `converged = false`.
pub fn least_squares(problem: &FitProblem) -> Result<FitResult> {
    problem.validate()?;
    let p = problem.theta0.len();
    let m = problem.y.len();
    let scale: Vec<f64> = match &problem.typical {
        Some(t) => problem.theta0.iter().zip(t).map(|(x, t)| x.abs().max(*t)).collect(),
        None => problem.theta0.iter().map(|x| if *x != 0.0 { x.abs() } else { 1.0 }).collect(),
    };

    let mut theta = problem.theta0.clone();
    let mut r = problem.residuals(&theta)?;
    let mut cost = sum_sq(&r);
    if !cost.is_finite() {
        return Err(FitError::NonFiniteStart);
    }
    let initial = cost;
    let mut history = vec![cost];
    let mut mu = 1e-3;
    let mut iterations = 0;
    let mut converged = cost == 0.0;
    let mut diag = DVector::<f64>::zeros(p);
    let mut normal = DMatrix::<f64>::zeros(p, p);
    let mut grad = DVector::<f64>::zeros(p);
    let mut fresh = false;

    while !converged {
        if !fresh {
            if iterations == MAX_ITERATIONS {
                break;
            }
            let jac = problem.jacobian(&theta, &scale)?;
            iterations += 1;
            normal = jac.transpose() * &jac;
            grad = jac.transpose() * DVector::from_column_slice(&r);
            let top = normal.diagonal().max();
            let floor = if top > 0.0 { 1e-12 * top } else { 1.0 };
            for j in 0..p {
                diag[j] = diag[j].max(normal[(j, j)]).max(floor);
            }
            fresh = true;
            if grad.iter().all(|g| *g == 0.0) {
                converged = true;
                break;
            }
        }
        let mut lhs = normal.clone();
        for j in 0..p {
            lhs[(j, j)] += mu * diag[j];
        }
        let du = match lhs.cholesky() {
            Some(ch) => ch.solve(&(-&grad)),
            None => {
                mu *= 10.0;
                if mu > 1e30 {
                    break;
                }
                continue;
            }
        };
        let mut trial: Vec<f64> = (0..p).map(|j| theta[j] + scale[j] * du[j]).collect();
        clamp_to(&mut trial, &problem.bounds);
        let rel = (0..p)
            .map(|j| (trial[j] - theta[j]).abs() / theta[j].abs().max(scale[j]))
            .fold(0.0, f64::max);
        let tr = problem.residuals(&trial)?;
        let tc = sum_sq(&tr);
        if tc.is_finite() && tc <= cost {
            theta = trial;
            r = tr;
            cost = tc;
            history.push(cost);
            mu = (mu / 3.0).max(1e-20);
            fresh = false;
            if rel < STEP_TOL || cost == 0.0 {
                converged = true;
            }
        } else {
            mu *= 4.0;
            if rel < STEP_TOL {
                converged = true;
            } else if mu > 1e30 {
                break;
            }
        }
    }

    let covariance = covariance(problem, &theta, &scale, cost, m, p)?;
    Ok(FitResult {
        model: problem.model,
        theta,
        residual_norm: cost,
        initial_residual_norm: initial,
        covariance,
        iterations,
        converged,
        history,
    })
}

fn covariance(
    problem: &FitProblem,
    theta: &[f64],
    scale: &[f64],
    cost: f64,
    m: usize,
    p: usize,
) -> Result<Vec<Vec<f64>>> {
    let jac = problem.jacobian(theta, scale)?;
    let s2 = cost / (m - p) as f64;
    let svd = jac.svd(false, true);
    let vt = svd.v_t.expect("v_t requested");
    let smax = svd.singular_values.max();
    let cut = smax * f64::EPSILON * m.max(p) as f64;
    let mut cov = vec![vec![0.0; p]; p];
    for (k, &sv) in svd.singular_values.iter().enumerate() {
        if sv <= cut || sv == 0.0 {
            continue;
        }
        let w = 1.0 / (sv * sv);
        for i in 0..p {
            for j in 0..p {
                cov[i][j] += w * vt[(k, i)] * vt[(k, j)];
            }
        }
    }
    for i in 0..p {
        for j in 0..p {
            cov[i][j] *= s2 * scale[i] * scale[j];
        }
    }
    // exact symmetry for downstream checks
    for i in 0..p {
        for j in 0..i {
            let v = 0.5 * (cov[i][j] + cov[j][i]);
            cov[i][j] = v;
            cov[j][i] = v;
        }
    }
    Ok(cov)
}

/// Which part of the reflection coefficient enters the residual.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DataMode {
    /// |r_c| only.
    #[default]
    Magnitude,
    /// Re and Im of r_c.
    Complex,
}

fn spectrum_observations(spectrum: &Spectrum, mode: DataMode) -> Vec<f64> {
    match mode {
        DataMode::Magnitude => spectrum.magnitudes(),
        DataMode::Complex => spectrum.r_c.iter().flat_map(|r| [r.re, r.im]).collect(),
    }
}

fn project(r: impl Iterator<Item = C64>, mode: DataMode) -> Vec<f64> {
    match mode {
        DataMode::Magnitude => r.map(|r| r.norm()).collect(),
        DataMode::Complex => r.flat_map(|r| [r.re, r.im]).collect(),
    }
}

fn check_spectrum(spectrum: &Spectrum) -> Result<()> {
    if spectrum.probe_grid.len() != spectrum.r_c.len() {
        return Err(FitError::InvalidProblem("probe grid and r_c differ in length".into()));
    }
    crate::steady::check_grid(&spectrum.probe_grid)
        .map_err(|e| FitError::InvalidProblem(e.to_string()))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SingleModeParams {
    pub omega_r: f64,
    pub kappa_tot: f64,
    pub kappa_ext: f64,
}

impl SingleModeParams {
    fn vec(&self) -> Vec<f64> {
        vec![self.omega_r, self.kappa_tot, self.kappa_ext]
    }

    fn from_slice(t: &[f64]) -> Self {
        SingleModeParams { omega_r: t[0], kappa_tot: t[1], kappa_ext: t[2] }
    }

    fn over_coupled(&self) -> bool {
        2.0 * self.kappa_ext >= self.kappa_tot
    }
}

/// 1 + iκ_ext/(Δ1 − iκ_tot/2), Δ1 = ω_r − ω_p.
pub fn single_mode_reflection(p: &SingleModeParams, omega_p: f64) -> C64 {
    let den = C64::new(p.omega_r - omega_p, -0.5 * p.kappa_tot);
    C64::new(1.0, 0.0) + I * p.kappa_ext / den
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SingleModeFit {
    pub params: SingleModeParams,
    /// The κ_ext ↔ κ_tot − κ_ext partner, indistinguishable from `params`
    /// when only |r_c| is fitted.
    pub mirror: Option<SingleModeParams>,
    pub mirror_residual: Option<f64>,
    pub fit: FitResult,
    pub warnings: Vec<String>,
}

/// Fits a single reflection dip. In magnitude mode the reported branch is
/// the one whose coupling regime (κ_ext above or below κ_tot/2) matches
/// `theta0`; the other branch is returned as `mirror`.
pub fn fit_single_mode(spectrum: &Spectrum, theta0: SingleModeParams, mode: DataMode) -> Result<SingleModeFit> {
    check_spectrum(spectrum)?;
    let grid = &spectrum.probe_grid;
    let y = spectrum_observations(spectrum, mode);
    let mut warnings = Vec::new();
    let span = grid[grid.len() - 1] - grid[0];
    if span < 3.0 * theta0.kappa_tot {
        warnings.push(format!(
            "probe span {span:e} rad/s covers fewer than 3 linewidths; parameters may be weakly identified"
        ));
    }
    let forward = |t: &[f64]| {
        let p = SingleModeParams::from_slice(t);
        project(grid.iter().map(|&w| single_mode_reflection(&p, w)), mode)
    };
    let cost_at = |t: &[f64]| sum_sq(&forward(t).iter().zip(&y).map(|(f, y)| f - y).collect::<Vec<_>>());

    // Locate the dip before descending. Each trial resonance takes κ_ext from
    // the data depth there, r = 1 − 2κ_ext/κ_tot, on the branch of `theta0`.
    let kt0 = theta0.kappa_tot;
    let ke_at = |i: usize| {
        let ratio = match mode {
            DataMode::Complex => 0.5 * (1.0 - y[2 * i]),
            DataMode::Magnitude if theta0.over_coupled() => 0.5 * (1.0 + y[i]),
            DataMode::Magnitude => 0.5 * (1.0 - y[i]),
        };
        kt0 * ratio.clamp(0.01, 0.99)
    };
    let mut start = theta0.vec();
    let mut best = cost_at(&start);
    for i in (0..grid.len()).step_by(grid.len().div_ceil(512).max(1)) {
        let cand = [grid[i], kt0, ke_at(i)];
        let c = cost_at(&cand);
        if c < best || !best.is_finite() {
            best = c;
            start = cand.to_vec();
        }
    }

    let problem = FitProblem {
        model: ModelKind::SingleMode,
        x: grid.clone(),
        y: y.clone(),
        theta0: start,
        bounds: vec![(0.0, f64::INFINITY); 3],
        weights: None,
        typical: Some(vec![theta0.omega_r.abs(), theta0.kappa_tot, theta0.kappa_tot]),
        forward: Box::new(forward),
    };
    let fit = least_squares(&problem)?;
    let fitted = SingleModeParams::from_slice(&fit.theta);
    let (mut params, mut mirror, mut mirror_residual) = (fitted, None, None);
    if mode == DataMode::Magnitude && fitted.kappa_tot > fitted.kappa_ext {
        let m = SingleModeParams { kappa_ext: fitted.kappa_tot - fitted.kappa_ext, ..fitted };
        let mc = cost_at(&m.vec());
        if m.over_coupled() == theta0.over_coupled() && fitted.over_coupled() != theta0.over_coupled() {
            mirror = Some(fitted);
            mirror_residual = Some(fit.residual_norm);
            params = m;
        } else {
            mirror = Some(m);
            mirror_residual = Some(mc);
        }
    }
    if !fit.converged {
        warnings.push(format!("least squares stopped after {} iterations without converging", fit.iterations));
    }
    Ok(SingleModeFit { params, mirror, mirror_residual, fit, warnings })
}

/// Loss rates held fixed in [`fit_lambda`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LambdaFixed {
    pub kappa_tot2: f64,
    pub kappa_tot3: f64,
    pub kappa_ext3: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LambdaParams {
    pub g: f64,
    pub delta2: f64,
    pub omega3_shifted: f64,
    /// Overall amplitude scale of the data; 1 unless fitted.
    pub amplitude: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct LambdaOptions {
    pub data: DataMode,
    /// Fit an overall amplitude scale as a nuisance parameter.
    pub fit_amplitude: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LambdaFit {
    pub params: LambdaParams,
    pub fit: FitResult,
    pub warnings: Vec<String>,
}

/// The two-mode system described by `p` and `fixed`, with the partner placed
/// directly at ω̃3 − Δ2 in the probe frame.
pub fn lambda_system(p: &LambdaParams, fixed: &LambdaFixed) -> TwoModeSystem {
    TwoModeSystem {
        omega3_shifted: p.omega3_shifted,
        omega2_shifted: p.omega3_shifted - p.delta2,
        kappa_tot3: fixed.kappa_tot3,
        kappa_tot2: fixed.kappa_tot2,
        kappa_ext3: fixed.kappa_ext3,
        g: p.g,
        omega_mod: 0.0,
        partner: PartnerSide::Below,
    }
}

/// Fits the Λ-type reflection with loss rates fixed. Returns g ≥ 0, Δ2 and
/// the shifted frequency of the probed mode.
pub fn fit_lambda(
    spectrum: &Spectrum,
    fixed: LambdaFixed,
    theta0: LambdaParams,
    opts: LambdaOptions,
) -> Result<LambdaFit> {
    check_spectrum(spectrum)?;
    let grid = &spectrum.probe_grid;
    let y = spectrum_observations(spectrum, opts.data);
    let np = if opts.fit_amplitude { 4 } else { 3 };
    let unpack = |t: &[f64]| LambdaParams {
        g: t[0],
        delta2: t[1],
        omega3_shifted: t[2],
        amplitude: if opts.fit_amplitude { t[3] } else { 1.0 },
    };
    let forward = |t: &[f64]| {
        let p = unpack(t);
        let sys = lambda_system(&p, &fixed);
        let mut out = project(grid.iter().map(|&w| reflection_closed_form(&sys, w)), opts.data);
        if p.amplitude != 1.0 {
            out.iter_mut().for_each(|v| *v *= p.amplitude);
        }
        out
    };
    let best_amplitude = |t: &[f64]| {
        let f = forward(&[t[0], t[1], t[2], 1.0][..np]);
        let num: f64 = f.iter().zip(&y).map(|(f, y)| f * y).sum();
        let den: f64 = f.iter().map(|f| f * f).sum();
        if den > 0.0 && num > 0.0 {
            num / den
        } else {
            1.0
        }
    };

    let mags = spectrum.magnitudes();
    let dips = deepest_dips(grid, &mags, 2);
    let g0 = theta0.g.abs();
    let mut starts: Vec<[f64; 3]> = Vec::new();
    match dips.as_slice() {
        [x1, x2] => {
            let c = 0.5 * (x1 + x2);
            let s = x2 - x1;
            let e = (s * s - 4.0 * g0 * g0).max(0.0).sqrt();
            starts.push([g0, e, c + 0.5 * e]);
            starts.push([g0, -e, c - 0.5 * e]);
            starts.push([0.5 * s, 0.0, c]);
        }
        [x] => starts.push([g0, theta0.delta2, *x]),
        _ => {}
    }
    if theta0.omega3_shifted >= grid[0] && theta0.omega3_shifted <= grid[grid.len() - 1] || starts.is_empty() {
        starts.push([g0, theta0.delta2, theta0.omega3_shifted]);
    }

    let k3 = fixed.kappa_tot3;
    let typical = vec![g0.max(k3), theta0.delta2.abs().max(k3), theta0.omega3_shifted.abs(), 1.0];
    let mut bounds = vec![(0.0, f64::INFINITY), (f64::NEG_INFINITY, f64::INFINITY), (0.0, f64::INFINITY)];
    if opts.fit_amplitude {
        bounds.push((0.0, f64::INFINITY));
    }

    let mut best: Option<FitResult> = None;
    for s in starts {
        let mut t0 = s.to_vec();
        if opts.fit_amplitude {
            t0.push(best_amplitude(&s));
        }
        let problem = FitProblem {
            model: ModelKind::Lambda,
            x: grid.clone(),
            y: y.clone(),
            theta0: t0,
            bounds: bounds.clone(),
            weights: None,
            typical: Some(typical[..np].to_vec()),
            forward: Box::new(forward),
        };
        let fit = match least_squares(&problem) {
            Ok(f) => f,
            Err(FitError::NonFiniteStart) => continue,
            Err(e) => return Err(e),
        };
        if best.as_ref().map_or(true, |b| fit.residual_norm < b.residual_norm) {
            best = Some(fit);
        }
    }
    let fit = best.ok_or(FitError::NonFiniteStart)?;
    let params = unpack(&fit.theta);
    let mut warnings = Vec::new();
    if params.g < 0.5 * fixed.kappa_tot3 {
        warnings.push(format!(
            "fitted g = {:e} rad/s is below kappa_tot3/2; splitting unresolved and parameters weakly identified",
            params.g
        ));
    }
    if !fit.converged {
        warnings.push(format!("least squares stopped after {} iterations without converging", fit.iterations));
    }
    Ok(LambdaFit { params, fit, warnings })
}

/// Column-by-column [`fit_lambda`] over a sweep, in parallel on the current
/// rayon pool. Each column uses the same `theta0`; results follow input order.
pub fn fit_lambda_batch(
    spectra: &[Spectrum],
    fixed: LambdaFixed,
    theta0: LambdaParams,
    opts: LambdaOptions,
) -> Vec<Result<LambdaFit>> {
    spectra.par_iter().map(|s| fit_lambda(s, fixed, theta0, opts)).collect()
}

/// Measured resonance frequencies of one mode versus DC flux.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModeSamples {
    pub n: u32,
    pub phi: Vec<f64>,
    /// Angular frequencies, rad/s.
    pub omega: Vec<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FluxArchOptions {
    /// L/C imposed on the reference mode to fix the (I_c/s, s·L, C/s) family.
    pub ratio_hint: f64,
    /// Mode carrying the gauge; the first mode when absent.
    pub reference_mode: Option<u32>,
}

impl Default for FluxArchOptions {
    fn default() -> Self {
        FluxArchOptions { ratio_hint: crate::constants::reference::RATIO_HINT, reference_mode: Some(3) }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FluxArchFit {
    pub i_c: f64,
    pub d: f64,
    /// (n, L_n, C_n) in input order.
    pub modes: Vec<(u32, f64, f64)>,
    /// Human-readable statement of the gauge choice.
    pub gauge: String,
    /// Fitted gauge-free parameters: d, then (ω0_n, x_n = L_s(0)/L_n) per mode.
    pub fit: FitResult,
    pub warnings: Vec<String>,
}

impl FluxArchFit {
    /// Device with the fitted circuit values; loss rates are taken from
    /// `template` where the mode exists there, otherwise zero.
    pub fn device(&self, template: Option<&DeviceParams>) -> DeviceParams {
        let modes = self
            .modes
            .iter()
            .map(|&(n, l, c)| {
                let (kappa_tot, kappa_ext) = template
                    .and_then(|t| t.mode(n).ok())
                    .map_or((0.0, 0.0), |m| (m.kappa_tot, m.kappa_ext));
                ModeParams { n, l, c, kappa_tot, kappa_ext }
            })
            .collect();
        DeviceParams { i_c: self.i_c, d: self.d, modes }
    }
}

fn squid_q(phi: f64, d: f64) -> f64 {
    let (s, c) = (PI * phi).sin_cos();
    (c * c + d * d * s * s).sqrt()
}

/// Joint fit of ω_r^(n)(Φ) over several modes sharing I_c and d.
///
/// Internally the model is ω0_n / √(1 + x_n / q(Φ; d)), which is free of the
/// L/C scaling degeneracy; circuit values are recovered by imposing
/// `opts.ratio_hint` on the reference mode.
pub fn fit_flux_arch(data: &[ModeSamples], theta0: &DeviceParams, opts: FluxArchOptions) -> Result<FluxArchFit> {
    if data.len() < 2 {
        return Err(FitError::InvalidProblem(format!("need at least 2 modes (got {})", data.len())));
    }
    for s in data {
        if s.phi.len() != s.omega.len() {
            return Err(FitError::InvalidProblem(format!("mode {}: phi and omega differ in length", s.n)));
        }
        if s.phi.len() < 4 {
            return Err(FitError::InvalidProblem(format!(
                "mode {} has {} flux points; need at least 4",
                s.n,
                s.phi.len()
            )));
        }
        if s.omega.iter().any(|w| !(*w > 0.0)) {
            return Err(FitError::InvalidProblem(format!("mode {}: frequencies must be > 0", s.n)));
        }
    }
    if !(opts.ratio_hint > 0.0) {
        return Err(FitError::InvalidProblem(format!("ratio_hint must be > 0 (got {})", opts.ratio_hint)));
    }
    if !(theta0.i_c > 0.0) {
        return Err(FitError::InvalidProblem("theta0.i_c must be > 0".into()));
    }
    let ref_idx = match opts.reference_mode {
        Some(n) => data.iter().position(|s| s.n == n).unwrap_or(0),
        None => 0,
    };

    let ls0 = PHI0 / (4.0 * PI * theta0.i_c);
    let mut t0 = vec![theta0.d.clamp(0.0, 1.0)];
    for s in data {
        let m = theta0.mode(s.n)?;
        t0.push(1.0 / (m.l * m.c).sqrt());
        t0.push(ls0 / m.l);
    }
    let mut bounds = vec![(0.0, 1.0)];
    bounds.extend(std::iter::repeat((0.0, f64::INFINITY)).take(2 * data.len()));

    let x: Vec<f64> = data.iter().flat_map(|s| s.phi.iter().copied()).collect();
    let y: Vec<f64> = data.iter().flat_map(|s| s.omega.iter().copied()).collect();
    let weights: Vec<f64> = y.iter().map(|w| 1.0 / w).collect();
    let forward = |t: &[f64]| {
        let d = t[0];
        let mut out = Vec::with_capacity(y.len());
        for (k, s) in data.iter().enumerate() {
            let (w0, xk) = (t[1 + 2 * k], t[2 + 2 * k]);
            out.extend(s.phi.iter().map(|&phi| w0 / (1.0 + xk / squid_q(phi, d)).sqrt()));
        }
        out
    };
    let typical: Vec<f64> = t0.iter().enumerate().map(|(i, v)| if i == 0 { v.max(0.05) } else { *v }).collect();
    let problem = FitProblem {
        model: ModelKind::FluxArch,
        x,
        y: y.clone(),
        theta0: t0,
        bounds,
        weights: Some(weights),
        typical: Some(typical),
        forward: Box::new(forward),
    };
    let fit = least_squares(&problem)?;

    let t = &fit.theta;
    let sr = opts.ratio_hint.sqrt();
    let (w_ref, x_ref) = (t[1 + 2 * ref_idx], t[2 + 2 * ref_idx]);
    let l_ref = sr / w_ref;
    let ls = x_ref * l_ref;
    let i_c = PHI0 / (4.0 * PI * ls);
    let modes = data
        .iter()
        .enumerate()
        .map(|(k, s)| {
            let (w0, xk) = (t[1 + 2 * k], t[2 + 2 * k]);
            let l = ls / xk;
            (s.n, l, 1.0 / (w0 * w0 * l))
        })
        .collect();

    let mut warnings = Vec::new();
    for s in data {
        let lo = s.phi.iter().copied().fold(f64::INFINITY, f64::min);
        let hi = s.phi.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        if hi - lo < 0.1 {
            warnings.push(format!("mode {}: flux span {:.4} Phi0 < 0.1; d weakly constrained", s.n, hi - lo));
        }
    }
    if !fit.converged {
        warnings.push(format!("least squares stopped after {} iterations without converging", fit.iterations));
    }
    Ok(FluxArchFit {
        i_c,
        d: t[0],
        modes,
        gauge: format!("L/C = {} ohm^2 imposed on mode {}", opts.ratio_hint, data[ref_idx].n),
        fit,
        warnings,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScalingFit {
    pub order: u8,
    /// c in y = c·x^order.
    pub coefficient: f64,
    pub std_error: f64,
    pub residual_norm: f64,
    /// √(SSR/Σy²).
    pub relative_residual: f64,
}

/// Through-origin fit y = c·x (order 1) or y = c·x² (order 2).
pub fn fit_scaling(points: &[(f64, f64)], order: u8) -> Result<ScalingFit> {
    if order != 1 && order != 2 {
        return Err(FitError::InvalidProblem(format!("order must be 1 or 2 (got {order})")));
    }
    let n = points.len();
    if n < order as usize + 2 {
        return Err(FitError::InvalidProblem(format!("need at least {} points (got {n})", order + 2)));
    }
    if points.iter().any(|(x, y)| !(x.is_finite() && y.is_finite())) {
        return Err(FitError::InvalidProblem("points must be finite".into()));
    }
    if points.iter().all(|p| p.0 == points[0].0) {
        return Err(FitError::RankDeficient("all abscissae are equal".into()));
    }
    let k = order as i32;
    let sxx: f64 = points.iter().map(|(x, _)| x.powi(2 * k)).sum();
    if sxx == 0.0 {
        return Err(FitError::RankDeficient("all abscissae are zero".into()));
    }
    let sxy: f64 = points.iter().map(|(x, y)| x.powi(k) * y).sum();
    let c = sxy / sxx;
    let ssr: f64 = points.iter().map(|(x, y)| (y - c * x.powi(k)).powi(2)).sum();
    let syy: f64 = points.iter().map(|(_, y)| y * y).sum();
    let s2 = ssr / (n - 1) as f64;
    Ok(ScalingFit {
        order,
        coefficient: c,
        std_error: (s2 / sxx).sqrt(),
        residual_norm: ssr,
        relative_residual: if syy > 0.0 { (ssr / syy).sqrt() } else { 0.0 },
    })
}

/// Generic through-origin monomial problem for [`least_squares`], used to
/// cross-check [`fit_scaling`].
pub fn polynomial_problem<'a>(points: &'a [(f64, f64)], order: u8, c0: f64) -> FitProblem<'a> {
    let k = order as i32;
    FitProblem {
        model: ModelKind::Polynomial,
        x: points.iter().map(|p| p.0).collect(),
        y: points.iter().map(|p| p.1).collect(),
        theta0: vec![c0],
        bounds: vec![(f64::NEG_INFINITY, f64::INFINITY)],
        weights: None,
        typical: None,
        forward: Box::new(move |t: &[f64]| points.iter().map(|(x, _)| t[0] * x.powi(k)).collect()),
    }
}
