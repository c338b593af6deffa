//! Static device physics of the SQUID-terminated resonator.
//!
//! All flux values are fractions of Φ0 and all frequencies and loss rates are
//! angular (rad/s). Each mode n is a lumped series (L_n + L_s(Φ)) C_n circuit
//! sharing the same SQUID inductance L_s.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::constants::{reference, ghz, mhz, HBAR, PHI0, TWO_PI};

/// Quadrature nodes used by [`motional_average`].
pub const MOTIONAL_NODES: usize = 128;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ModelError {
    #[error("invalid device: {0}")]
    InvalidDevice(String),
    #[error("SQUID inductance diverges at phi = {phi} (d = 0 at half flux quantum)")]
    Divergent { phi: f64 },
    #[error("mode {0} is not part of the device")]
    UnknownMode(u32),
    #[error("invalid operating point: {0}")]
    InvalidOperatingPoint(String),
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
}

pub type Result<T> = std::result::Result<T, ModelError>;

/// One resonator mode as a lumped LC element plus its loss rates.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModeParams {
    pub n: u32,
    /// Effective inductance, henries.
    pub l: f64,
    /// Effective capacitance, farads.
    pub c: f64,
    /// Total energy loss rate, rad/s.
    pub kappa_tot: f64,
    /// Port (external) loss rate, rad/s.
    pub kappa_ext: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DeviceParams {
    /// SQUID critical current, amperes.
    pub i_c: f64,
    /// Junction asymmetry, 0 ≤ d ≤ 1.
    pub d: f64,
    pub modes: Vec<ModeParams>,
}

impl DeviceParams {
    /// The measured device at Φ = 0.33 Φ0: modes 2, 3, 4 calibrated to the
    /// reported resonance frequencies and loss rates.
    ///
    /// κ_ext is only reported for mode 3; modes 2 and 4 reuse mode 3's
    /// κ_ext/κ_tot ratio.
    pub fn reference() -> Self {
        let i_c = reference::I_C;
        let d = reference::ASYMMETRY;
        let ext_ratio = reference::KAPPA_EXT3_MHZ
            / reference::KAPPA_TOT_MHZ.iter().find(|(n, _)| *n == 3).unwrap().1;
        let modes = reference::MODE_FREQ_GHZ
            .iter()
            .zip(reference::KAPPA_TOT_MHZ.iter())
            .map(|(&(n, f), &(_, k))| {
                let (l, c) = calibrate_lc(ghz(f), reference::PHI_DC, reference::RATIO_HINT, i_c, d)
                    .expect("reference calibration");
                let kappa_ext = if n == 3 {
                    mhz(reference::KAPPA_EXT3_MHZ)
                } else {
                    ext_ratio * mhz(k)
                };
                ModeParams { n, l, c, kappa_tot: mhz(k), kappa_ext }
            })
            .collect();
        DeviceParams { i_c, d, modes }
    }

    pub fn mode(&self, n: u32) -> Result<&ModeParams> {
        self.modes.iter().find(|m| m.n == n).ok_or(ModelError::UnknownMode(n))
    }

    /// Every violated invariant, with the offending field named.
    pub fn violations(&self) -> Vec<String> {
        let mut out = Vec::new();
        if !(self.i_c > 0.0 && self.i_c.is_finite()) {
            out.push(format!("i_c must be > 0 (got {})", self.i_c));
        }
        if !(0.0..=1.0).contains(&self.d) {
            out.push(format!("d must lie in [0, 1] (got {})", self.d));
        }
        if self.modes.is_empty() {
            out.push("modes must not be empty".to_string());
        }
        for (i, m) in self.modes.iter().enumerate() {
            if !(m.l > 0.0 && m.l.is_finite()) {
                out.push(format!("modes[{i}].l must be > 0 (got {})", m.l));
            }
            if !(m.c > 0.0 && m.c.is_finite()) {
                out.push(format!("modes[{i}].c must be > 0 (got {})", m.c));
            }
            if !(m.kappa_ext > 0.0) {
                out.push(format!("modes[{i}].kappa_ext must be > 0 (got {})", m.kappa_ext));
            }
            if m.kappa_ext > m.kappa_tot {
                out.push(format!(
                    "modes[{i}].kappa_ext must not exceed kappa_tot ({} > {})",
                    m.kappa_ext, m.kappa_tot
                ));
            }
            if self.modes[..i].iter().any(|o| o.n == m.n) {
                out.push(format!("modes[{i}].n = {} is duplicated", m.n));
            }
        }
        out
    }

    pub fn validate(&self) -> Result<()> {
        let v = self.violations();
        if v.is_empty() {
            Ok(())
        } else {
            Err(ModelError::InvalidDevice(v.join("; ")))
        }
    }
}

/// DC bias, modulation amplitude and modulation frequency of the flux drive.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FluxOperatingPoint {
    /// DC flux, units of Φ0.
    pub phi_dc: f64,
    /// Modulation amplitude δΦ, units of Φ0.
    pub delta_phi: f64,
    /// Modulation angular frequency ω_Φ, rad/s.
    pub omega_mod: f64,
}

impl FluxOperatingPoint {
    pub fn validate(&self) -> Result<()> {
        if !(self.delta_phi >= 0.0) {
            return Err(ModelError::InvalidOperatingPoint(format!(
                "delta_phi must be >= 0 (got {})",
                self.delta_phi
            )));
        }
        if self.delta_phi > 0.0 && !(self.omega_mod > 0.0) {
            return Err(ModelError::InvalidOperatingPoint(
                "omega_mod must be > 0 when delta_phi > 0".to_string(),
            ));
        }
        Ok(())
    }
}

/// Linear map δΦ → g_Φ.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CouplingLaw {
    /// Slope in rad/s per Φ0.
    pub eta: f64,
}

impl Default for CouplingLaw {
    fn default() -> Self {
        CouplingLaw { eta: ghz(reference::ETA_GHZ_PER_PHI0) }
    }
}

fn squid_inductance_raw(phi: f64, i_c: f64, d: f64) -> Result<f64> {
    let (s, c) = (PI * phi).sin_cos();
    let q = c * c + d * d * s * s;
    if q <= 1e-30 {
        return Err(ModelError::Divergent { phi });
    }
    Ok(PHI0 / (4.0 * PI * i_c * q.sqrt()))
}

/// Flux-dependent SQUID inductance L_s(Φ) = Φ0 / (4π I_c √(cos²(πΦ) + d² sin²(πΦ))).
pub fn squid_inductance(phi_dc: f64, device: &DeviceParams) -> Result<f64> {
    squid_inductance_raw(phi_dc, device.i_c, device.d)
}

fn lc_frequency(l: f64, c: f64, ls: f64) -> f64 {
    1.0 / (c * (l + ls)).sqrt()
}

/// Resonance ω_r^(n)(Φ) = 1/√(C_n (L_n + L_s(Φ))).
pub fn mode_frequency(n: u32, phi_dc: f64, device: &DeviceParams) -> Result<f64> {
    let m = device.mode(n)?;
    Ok(lc_frequency(m.l, m.c, squid_inductance(phi_dc, device)?))
}

/// Inverts [`mode_frequency`]: the (L_n, C_n) pair with L_n/C_n = `ratio_hint`
/// that resonates at `omega_target` when biased at `phi_dc`.
pub fn calibrate_lc(
    omega_target: f64,
    phi_dc: f64,
    ratio_hint: f64,
    i_c: f64,
    d: f64,
) -> Result<(f64, f64)> {
    if !(omega_target > 0.0) {
        return Err(ModelError::InvalidArgument(format!(
            "omega_target must be > 0 (got {omega_target})"
        )));
    }
    if !(ratio_hint > 0.0) {
        return Err(ModelError::InvalidArgument(format!(
            "ratio_hint must be > 0 (got {ratio_hint})"
        )));
    }
    let ls = squid_inductance_raw(phi_dc, i_c, d)?;
    // r C² + L_s C − 1/ω² = 0, positive root in the cancellation-free form.
    let w2 = omega_target * omega_target;
    let c = 2.0 / (w2 * (ls + (ls * ls + 4.0 * ratio_hint / w2).sqrt()));
    Ok((ratio_hint * c, c))
}

/// Time average of the instantaneous mode frequency over one modulation
/// period, Φ(θ) = Φ_dc + δΦ sin θ, by periodic trapezoidal quadrature.
pub fn motional_average(n: u32, op: &FluxOperatingPoint, device: &DeviceParams) -> Result<f64> {
    motional_average_with_nodes(n, op, device, MOTIONAL_NODES)
}

pub fn motional_average_with_nodes(
    n: u32,
    op: &FluxOperatingPoint,
    device: &DeviceParams,
    nodes: usize,
) -> Result<f64> {
    op.validate()?;
    if nodes < 64 {
        return Err(ModelError::InvalidArgument(format!("need at least 64 nodes (got {nodes})")));
    }
    if op.delta_phi == 0.0 {
        return mode_frequency(n, op.phi_dc, device);
    }
    let m = device.mode(n)?;
    let mut sum = 0.0;
    for k in 0..nodes {
        let theta = TWO_PI * k as f64 / nodes as f64;
        let phi = op.phi_dc + op.delta_phi * theta.sin();
        sum += lc_frequency(m.l, m.c, squid_inductance(phi, device)?);
    }
    Ok(sum / nodes as f64)
}

/// Motional-averaging shift Δ_Φ = ω̃_r^(n) − ω_r^(n).
pub fn motional_shift(n: u32, op: &FluxOperatingPoint, device: &DeviceParams) -> Result<f64> {
    Ok(motional_average(n, op, device)? - mode_frequency(n, op.phi_dc, device)?)
}

pub fn coupling_strength(delta_phi: f64, law: &CouplingLaw) -> f64 {
    law.eta * delta_phi
}

/// Photon flux |α_in|² = P/(ħω) of a probe of `p_dbm` at angular frequency `omega`.
pub fn dbm_to_photon_flux(p_dbm: f64, omega: f64) -> f64 {
    let watts = 10f64.powf((p_dbm - 30.0) / 10.0);
    watts / (HBAR * omega)
}

/// (ω3 − ω2) − (ω4 − ω3): the spacing mismatch that lets a modulation tone
/// address one mode pair only when it exceeds every linewidth.
pub fn spacing_mismatch(omega2: f64, omega3: f64, omega4: f64) -> f64 {
    (omega3 - omega2) - (omega4 - omega3)
}
