//! Physical constants and the reference device operating point.

use std::f64::consts::PI;

/// Magnetic flux quantum h/2e in webers (CODATA 2018, truncated to 10 digits).
pub const PHI0: f64 = 2.067833848e-15;

/// Reduced Planck constant in J·s (CODATA 2018, 10 digits).
pub const HBAR: f64 = 1.054571817e-34;

pub const TWO_PI: f64 = 2.0 * PI;

/// Converts a frequency quoted as f = ω/2π in GHz to rad/s.
#[inline]
pub fn ghz(f: f64) -> f64 {
    TWO_PI * f * 1e9
}

/// Converts a frequency quoted as f = ω/2π in MHz to rad/s.
#[inline]
pub fn mhz(f: f64) -> f64 {
    TWO_PI * f * 1e6
}

#[inline]
pub fn to_ghz(omega: f64) -> f64 {
    omega / TWO_PI / 1e9
}

#[inline]
pub fn to_mhz(omega: f64) -> f64 {
    omega / TWO_PI / 1e6
}

/// Reference operating point of the measured device.
pub mod reference {
    /// DC flux bias in units of Φ0.
    pub const PHI_DC: f64 = 0.33;

    /// Mode resonance frequencies f = ω/2π in GHz at [`PHI_DC`], for modes 2, 3, 4.
    pub const MODE_FREQ_GHZ: [(u32, f64); 3] = [(2, 4.0614), (3, 5.7284), (4, 7.4203)];

    /// Total loss rates κ_tot/2π in MHz for modes 2, 3, 4.
    pub const KAPPA_TOT_MHZ: [(u32, f64); 3] = [(2, 4.6461), (3, 6.8857), (4, 8.3224)];

    /// External (port) loss rate κ_ext/2π of mode 3 in MHz.
    pub const KAPPA_EXT3_MHZ: f64 = 4.0874;

    /// Parametric modulation frequency ω_Φ/2π in GHz.
    pub const OMEGA_MOD_GHZ: f64 = 1.664;

    /// Probe carrier of the pulsed experiments, GHz.
    pub const PULSE_CARRIER_GHZ: f64 = 5.728;

    /// Gaussian envelope width τ_d in seconds, envelope exp(-t²/τ_d²).
    pub const PULSE_TAU_D: f64 = 5e-9;

    pub const PULSE_POWER_DBM: f64 = -102.0;
    pub const SPECTROSCOPY_POWER_DBM: f64 = -117.0;

    /// Coupling used in the line cut of the split spectrum, g/2π in MHz.
    pub const LINE_CUT_G_MHZ: f64 = 6.6;

    /// Coupling used for storage and retrieval, g/2π in MHz.
    pub const MEMORY_G_MHZ: f64 = 17.6;

    /// Critical current (A) and junction asymmetry of the default device.
    /// Neither is published; these only shape the flux arch away from [`PHI_DC`].
    pub const I_C: f64 = 1e-6;
    pub const ASYMMETRY: f64 = 0.1;

    /// Default L_n/C_n ratio (Ω²) pinning the one-parameter (L_n, C_n) family,
    /// i.e. a 50 Ω characteristic impedance.
    pub const RATIO_HINT: f64 = 2500.0;

    /// Default coupling law slope: g/2π of 1 GHz per Φ0, so 0 to 20 MHz
    /// spans δΦ from 0 to 0.02 Φ0.
    pub const ETA_GHZ_PER_PHI0: f64 = 1.0;
}
