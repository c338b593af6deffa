//! The rotating-frame two-mode model shared by the steady-state, dynamics and
//! fitting code.
//!
//! Mode `a` (called mode 3 throughout) is probed through the port; mode `b`
//! (mode 2) is the partner reached by the parametric tone. Its rotating-frame
//! frequency is ω̃2 + ω_Φ when the partner sits below the probed mode and
//! ω̃2 − ω_Φ when it sits above.

use serde::{Deserialize, Serialize};

use crate::model::{self, CouplingLaw, DeviceParams, FluxOperatingPoint, ModelError};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PartnerSide {
    #[default]
    Below,
    Above,
}

impl PartnerSide {
    fn sign(self) -> f64 {
        match self {
            PartnerSide::Below => 1.0,
            PartnerSide::Above => -1.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TwoModeSystem {
    /// Motionally shifted frequency ω̃_r^(3) of the probed mode, rad/s.
    pub omega3_shifted: f64,
    /// Motionally shifted frequency ω̃_r^(2) of the partner mode, rad/s.
    pub omega2_shifted: f64,
    pub kappa_tot3: f64,
    pub kappa_tot2: f64,
    pub kappa_ext3: f64,
    /// Parametric coupling g_Φ, rad/s.
    pub g: f64,
    /// Modulation frequency ω_Φ, rad/s.
    pub omega_mod: f64,
    #[serde(default)]
    pub partner: PartnerSide,
}

/// Δ1 = ω̃3 − ω_p, Δ2 = ω̃3 − (ω̃2 ± ω_Φ), δ = Δ1 − Δ2.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Detunings {
    pub delta1: f64,
    pub delta2: f64,
    pub delta: f64,
}

impl TwoModeSystem {
    /// Frequency of the partner mode seen in the probe's rotating frame.
    pub fn partner_frame(&self) -> f64 {
        self.omega2_shifted + self.partner.sign() * self.omega_mod
    }

    pub fn delta2(&self) -> f64 {
        self.omega3_shifted - self.partner_frame()
    }

    pub fn detunings(&self, omega_p: f64) -> Detunings {
        let delta1 = self.omega3_shifted - omega_p;
        // δ is formed directly so it stays exact when Δ1 and Δ2 are large.
        let delta = self.partner_frame() - omega_p;
        Detunings { delta1, delta2: self.delta2(), delta }
    }

    /// Sets ω_Φ so that Δ2 = 0.
    pub fn on_resonance(mut self) -> Self {
        self.omega_mod = self.partner.sign() * (self.omega3_shifted - self.omega2_shifted);
        self
    }

    pub fn violations(&self) -> Vec<String> {
        let mut v = Vec::new();
        let finite = [
            ("omega3_shifted", self.omega3_shifted),
            ("omega2_shifted", self.omega2_shifted),
            ("omega_mod", self.omega_mod),
        ];
        for (name, x) in finite {
            if !x.is_finite() {
                v.push(format!("{name} must be finite"));
            }
        }
        if !(self.kappa_ext3 > 0.0) {
            v.push(format!("kappa_ext3 must be > 0 (got {})", self.kappa_ext3));
        }
        if !(self.kappa_ext3 <= self.kappa_tot3) {
            v.push(format!(
                "kappa_ext3 must not exceed kappa_tot3 ({} > {})",
                self.kappa_ext3, self.kappa_tot3
            ));
        }
        if !(self.kappa_tot2 > 0.0) {
            v.push(format!("kappa_tot2 must be > 0 (got {})", self.kappa_tot2));
        }
        if !(self.g >= 0.0) {
            v.push(format!("g must be >= 0 (got {})", self.g));
        }
        v
    }

    pub fn is_valid(&self) -> bool {
        self.violations().is_empty()
    }

    /// Builds the probed/partner pair from device physics: motionally averaged
    /// frequencies at `op`, coupling from `law`, loss rates from the device.
    pub fn from_device(
        device: &DeviceParams,
        op: &FluxOperatingPoint,
        law: &CouplingLaw,
        probed: u32,
        partner: u32,
    ) -> Result<Self, ModelError> {
        device.validate()?;
        let a = device.mode(probed)?;
        let b = device.mode(partner)?;
        let omega3 = model::motional_average(probed, op, device)?;
        let omega2 = model::motional_average(partner, op, device)?;
        Ok(TwoModeSystem {
            omega3_shifted: omega3,
            omega2_shifted: omega2,
            kappa_tot3: a.kappa_tot,
            kappa_tot2: b.kappa_tot,
            kappa_ext3: a.kappa_ext,
            g: model::coupling_strength(op.delta_phi, law),
            omega_mod: op.omega_mod,
            partner: if omega2 < omega3 { PartnerSide::Below } else { PartnerSide::Above },
        })
    }

    /// The reference line-cut system: modes 3 and 2 at their reported
    /// frequencies and losses, Δ2 = 0, coupling `g`.
    pub fn reference(g: f64) -> Self {
        use crate::constants::{ghz, mhz, reference as r};
        let k = |n: u32| r::KAPPA_TOT_MHZ.iter().find(|(m, _)| *m == n).unwrap().1;
        let f = |n: u32| r::MODE_FREQ_GHZ.iter().find(|(m, _)| *m == n).unwrap().1;
        TwoModeSystem {
            omega3_shifted: ghz(f(3)),
            omega2_shifted: ghz(f(2)),
            kappa_tot3: mhz(k(3)),
            kappa_tot2: mhz(k(2)),
            kappa_ext3: mhz(r::KAPPA_EXT3_MHZ),
            g,
            omega_mod: 0.0,
            partner: PartnerSide::Below,
        }
        .on_resonance()
    }
}
