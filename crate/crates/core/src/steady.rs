//! Continuous-wave steady state of the driven two-mode system.
//!
//! Two renditions of the same linear response are kept side by side: the
//! 2×2 solve of the Langevin equations with time derivatives set to zero
//! ([`steady_amplitudes`], [`reflection_numeric`]) and the Λ-type closed form
//! ([`reflection_closed_form`]). Spectra are produced from the closed form;
//! the linear solve exists so the two can be checked against each other.

use num_complex::Complex64 as C64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::system::TwoModeSystem;

const I: C64 = C64 { re: 0.0, im: 1.0 };

#[derive(Debug, Clone, PartialEq, Error)]
pub enum SteadyError {
    #[error("invalid two-mode system: {0}")]
    InvalidSystem(String),
    #[error("steady-state matrix is singular at omega_p = {0}")]
    Singular(f64),
    #[error("probe grid is empty")]
    EmptyGrid,
    #[error("probe grid must be strictly increasing (index {0})")]
    GridNotIncreasing(usize),
}

pub type Result<T> = std::result::Result<T, SteadyError>;

fn check(system: &TwoModeSystem) -> Result<()> {
    let v = system.violations();
    if v.is_empty() {
        Ok(())
    } else {
        Err(SteadyError::InvalidSystem(v.join("; ")))
    }
}

/// Intracavity amplitudes (a, b) with ȧ = ḃ = 0 under a CW probe at `omega_p`.
pub fn steady_amplitudes(system: &TwoModeSystem, omega_p: f64, alpha_in: C64) -> Result<(C64, C64)> {
    check(system)?;
    let d = system.detunings(omega_p);
    // [m11 m12; m21 m22] (a, b)ᵀ = (i√κe α, 0)ᵀ
    let m11 = C64::new(-0.5 * system.kappa_tot3, -d.delta1);
    let m22 = C64::new(-0.5 * system.kappa_tot2, -d.delta);
    let m12 = -I * system.g;
    let det = m11 * m22 - m12 * m12;
    if det.norm() == 0.0 {
        return Err(SteadyError::Singular(omega_p));
    }
    let f = I * system.kappa_ext3.sqrt() * alpha_in;
    let a = f * m22 / det;
    let b = -m12 * f / det;
    Ok((a, b))
}

/// α_out/α_in from the linear solve and the port relation α_out = α_in − i√κe a.
pub fn reflection_numeric(system: &TwoModeSystem, omega_p: f64) -> Result<C64> {
    let (a, _) = steady_amplitudes(system, omega_p, C64::new(1.0, 0.0))?;
    Ok(C64::new(1.0, 0.0) - I * system.kappa_ext3.sqrt() * a)
}

/// Λ-type closed form
/// r = 1 + 2i (κe/2)(δ − iκ2/2) / [(δ − iκ2/2)(δ + Δ2 − iκ3/2) − g²].
pub fn reflection_closed_form(system: &TwoModeSystem, omega_p: f64) -> C64 {
    let d = system.detunings(omega_p);
    let lower = C64::new(d.delta, -0.5 * system.kappa_tot2);
    let upper = C64::new(d.delta1, -0.5 * system.kappa_tot3);
    let num = 0.5 * system.kappa_ext3 * lower;
    let den = lower * upper - system.g * system.g;
    C64::new(1.0, 0.0) + 2.0 * I * num / den
}

/// Complex eigenfrequencies of the dressed modes (probe-frame lab frequency
/// minus i·half-linewidth), ordered by real part.
pub fn dressed_eigenfrequencies(system: &TwoModeSystem) -> [C64; 2] {
    // eigenvalues of [[p, g], [g, q]]
    let p = C64::new(system.omega3_shifted, -0.5 * system.kappa_tot3);
    let q = C64::new(system.partner_frame(), -0.5 * system.kappa_tot2);
    let mean = 0.5 * (p + q);
    let half = 0.5 * (p - q);
    let root = (half * half + system.g * system.g).sqrt();
    let (x, y) = (mean - root, mean + root);
    if x.re <= y.re {
        [x, y]
    } else {
        [y, x]
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpectrumMeta {
    pub system: TwoModeSystem,
    /// Free-form provenance: which sweep produced the spectrum.
    pub provenance: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Spectrum {
    /// Probe angular frequencies, strictly increasing.
    pub probe_grid: Vec<f64>,
    pub r_c: Vec<C64>,
    pub metadata: SpectrumMeta,
}

impl Spectrum {
    pub fn magnitudes(&self) -> Vec<f64> {
        self.r_c.iter().map(|r| r.norm()).collect()
    }

    pub fn len(&self) -> usize {
        self.probe_grid.len()
    }

    pub fn is_empty(&self) -> bool {
        self.probe_grid.is_empty()
    }
}

pub fn check_grid(grid: &[f64]) -> Result<()> {
    if grid.is_empty() {
        return Err(SteadyError::EmptyGrid);
    }
    match grid.windows(2).position(|w| !(w[1] > w[0])) {
        Some(i) => Err(SteadyError::GridNotIncreasing(i + 1)),
        None => Ok(()),
    }
}

/// Evenly spaced grid of `count` points from `start` to `stop` inclusive.
pub fn linspace(start: f64, stop: f64, count: usize) -> Vec<f64> {
    match count {
        0 => Vec::new(),
        1 => vec![start],
        _ => {
            let step = (stop - start) / (count - 1) as f64;
            (0..count)
                .map(|i| if i + 1 == count { stop } else { start + step * i as f64 })
                .collect()
        }
    }
}

/// Closed-form reflection over `grid`. Points are evaluated in parallel on the
/// current rayon pool; output order follows the grid.
pub fn spectrum_sweep(system: &TwoModeSystem, grid: &[f64]) -> Result<Spectrum> {
    check(system)?;
    check_grid(grid)?;
    let r_c = grid.par_iter().map(|&w| reflection_closed_form(system, w)).collect();
    Ok(Spectrum {
        probe_grid: grid.to_vec(),
        r_c,
        metadata: SpectrumMeta { system: *system, provenance: String::from("spectrum_sweep") },
    })
}

/// Vertex of the parabola through three points.
pub(crate) fn parabolic_vertex(x: [f64; 3], y: [f64; 3]) -> f64 {
    let d1 = (y[1] - y[0]) / (x[1] - x[0]);
    let d2 = (y[2] - y[1]) / (x[2] - x[1]);
    let curv = (d2 - d1) / (x[2] - x[0]);
    if curv == 0.0 || !curv.is_finite() {
        return x[1];
    }
    let v = 0.5 * (x[0] + x[1]) - d1 / (2.0 * curv);
    v.clamp(x[0], x[2])
}

/// Local minima of `values` sampled on `grid`, refined by three-point
/// parabolic interpolation. Endpoints never count as dips.
pub fn find_dips(grid: &[f64], values: &[f64]) -> Vec<f64> {
    let n = grid.len().min(values.len());
    let mut out = Vec::new();
    let mut i = 1;
    while i + 1 < n {
        if values[i] < values[i - 1] {
            // walk across a flat bottom
            let mut j = i;
            while j + 1 < n && values[j + 1] == values[i] {
                j += 1;
            }
            if j + 1 < n && values[j + 1] > values[j] {
                let x = if j == i {
                    parabolic_vertex(
                        [grid[i - 1], grid[i], grid[i + 1]],
                        [values[i - 1], values[i], values[i + 1]],
                    )
                } else {
                    0.5 * (grid[i] + grid[j])
                };
                out.push(x);
            }
            i = j + 1;
        } else {
            i += 1;
        }
    }
    out
}

/// Separation between the two deepest dips of |r_c|, or 0 when fewer than two
/// dips are resolved.
pub fn dip_separation(spectrum: &Spectrum) -> f64 {
    let mags = spectrum.magnitudes();
    let dips = deepest_dips(&spectrum.probe_grid, &mags, 2);
    match dips.as_slice() {
        [a, b] => (b - a).abs(),
        _ => 0.0,
    }
}

/// Positions of the `k` deepest dips, sorted by position.
pub fn deepest_dips(grid: &[f64], values: &[f64], k: usize) -> Vec<f64> {
    let dips = find_dips(grid, values);
    let mut scored: Vec<(f64, f64)> = dips
        .into_iter()
        .map(|x| {
            let i = grid.partition_point(|&g| g < x).min(grid.len() - 1);
            let lo = i.saturating_sub(1);
            (values[lo].min(values[i]), x)
        })
        .collect();
    scored.sort_by(|a, b| a.0.total_cmp(&b.0));
    let mut pos: Vec<f64> = scored.into_iter().take(k).map(|(_, x)| x).collect();
    pos.sort_by(f64::total_cmp);
    pos
}

/// One anti-crossing map: |r_c| over (ω_Φ, ω_p).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SplittingMap {
    pub omega_mod: Vec<f64>,
    pub probe: Vec<f64>,
    /// `abs_rc[i][j]` at `omega_mod[i]`, `probe[j]`.
    pub abs_rc: Vec<Vec<f64>>,
    /// Least-squares slope dω_p/dω_Φ of the lower and upper dressed branches,
    /// over the columns where both are resolved.
    pub branch_slopes: Option<(f64, f64)>,
}

impl SplittingMap {
    /// +1 or −1 from the mean branch slope; 0 when no branches were resolved.
    pub fn orientation(&self) -> f64 {
        match self.branch_slopes {
            Some((a, b)) => (a + b).signum(),
            None => 0.0,
        }
    }
}

fn slope(x: &[f64], y: &[f64]) -> f64 {
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let sxy: f64 = x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)).sum();
    let sxx: f64 = x.iter().map(|a| (a - mx) * (a - mx)).sum();
    sxy / sxx
}

fn splitting_map(system: &TwoModeSystem, omega_mod: &[f64], probe: &[f64]) -> Result<SplittingMap> {
    check(system)?;
    check_grid(omega_mod)?;
    check_grid(probe)?;
    let abs_rc: Vec<Vec<f64>> = omega_mod
        .par_iter()
        .map(|&w| {
            let s = TwoModeSystem { omega_mod: w, ..*system };
            probe.iter().map(|&p| reflection_closed_form(&s, p).norm()).collect()
        })
        .collect();
    let mut xs = Vec::new();
    let mut lower = Vec::new();
    let mut upper = Vec::new();
    for (w, col) in omega_mod.iter().zip(&abs_rc) {
        if let [a, b] = deepest_dips(probe, col, 2).as_slice() {
            xs.push(*w);
            lower.push(*a);
            upper.push(*b);
        }
    }
    let branch_slopes = (xs.len() >= 2).then(|| (slope(&xs, &lower), slope(&xs, &upper)));
    Ok(SplittingMap { omega_mod: omega_mod.to_vec(), probe: probe.to_vec(), abs_rc, branch_slopes })
}

/// Anti-crossing maps seen from each end of a coupled pair: `probe_lower`
/// views the lower mode (partner above) and `probe_upper` the upper mode
/// (partner below). The branch slopes of the two maps have opposite sign.
pub fn splitting_directions(
    probe_lower: (&TwoModeSystem, &[f64]),
    probe_upper: (&TwoModeSystem, &[f64]),
    omega_mod: &[f64],
) -> Result<[SplittingMap; 2]> {
    Ok([
        splitting_map(probe_lower.0, omega_mod, probe_lower.1)?,
        splitting_map(probe_upper.0, omega_mod, probe_upper.1)?,
    ])
}
