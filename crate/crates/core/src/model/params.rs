use super::ModelError;
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;

/// Physical constants and couplings in simulation units.
#[allow(non_snake_case)]
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PhysParams {
    pub hbar: f64,
    pub m: f64,
    pub omega_m: f64,
    /// Spin-cantilever coupling η.
    pub eta: f64,
    /// Rabi energy ε.
    pub epsilon: f64,
    /// Dissipation rate γ_m = Γ/2m.
    pub gamma_m: f64,
    pub kT: f64,
    pub kappa: f64,
    pub E_drive: f64,
    pub gamma_c: f64,
    /// Detector efficiency.
    pub e_d: f64,
    /// Photocurrent display scale.
    pub beta: f64,
    /// Seconds per simulation time unit (1/ω_m in physical units).
    pub time_unit_seconds: f64,
    /// Remove the constant radiation-pressure force from the effective Hamiltonian.
    #[serde(default)]
    pub drop_constant_force: bool,
    /// Laboratory-frame quantities kept for reference only.
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub lab_metadata: BTreeMap<String, f64>,
}

/// Regime diagnostics: violations warn, they never abort.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RegimeFlags {
    /// γ_c / ω_m.
    pub cavity_ratio: f64,
    pub bad_cavity: bool,
    /// ω_m / γ_m (infinite when undamped).
    pub damping_ratio: f64,
    pub weak_damping: bool,
    /// k_B T / ħω_m.
    pub thermal_ratio: f64,
    pub high_temperature: bool,
}

/// Ratio above which "≫" is considered satisfied.
pub const REGIME_MARGIN: f64 = 10.0;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DerivedParams {
    /// Thermal de Broglie length ℓ.
    pub ell: f64,
    /// Bath coupling Γ = 2mγ_m.
    pub big_gamma: f64,
    /// Q = mω_m/Γ.
    pub q_factor: f64,
    /// Alternative convention Q = ω_m/γ_m.
    pub q_factor_alt: f64,
    /// |α₀| = 2E/γ_c.
    pub alpha0_abs: f64,
    /// 8κE/γ_c.
    pub signal_multiplier: f64,
    /// 4κE²/γ_c².
    pub constant_force: f64,
    /// √(8κ²E²/γ_c³).
    pub meas_coefficient: f64,
    pub regime: RegimeFlags,
}

impl PhysParams {
    /// Bare oscillator with ħ = m = ω_m = 1 and every coupling switched off.
    pub fn unit_oscillator() -> Self {
        Self {
            hbar: 1.0,
            m: 1.0,
            omega_m: 1.0,
            eta: 0.0,
            epsilon: 1.0,
            gamma_m: 0.0,
            kT: 1.0,
            kappa: 0.0,
            E_drive: 0.0,
            gamma_c: 1.0,
            e_d: 1.0,
            beta: 1.0,
            time_unit_seconds: 1e-5,
            drop_constant_force: false,
            lab_metadata: BTreeMap::new(),
        }
    }

    /// Range checks. Returns the regime flags on success.
    pub fn validate(&self) -> Result<RegimeFlags, ModelError> {
        let positive = [
            ("hbar", self.hbar),
            ("m", self.m),
            ("omega_m", self.omega_m),
            ("epsilon", self.epsilon),
            ("kT", self.kT),
            ("gamma_c", self.gamma_c),
            ("beta", self.beta),
            ("time_unit_seconds", self.time_unit_seconds),
        ];
        for (name, v) in positive {
            if !(v > 0.0 && v.is_finite()) {
                return Err(ModelError::Parameter(format!(
                    "{name} must be positive and finite, got {v}"
                )));
            }
        }
        let nonneg = [
            ("gamma_m", self.gamma_m),
            ("kappa", self.kappa),
            ("E_drive", self.E_drive),
        ];
        for (name, v) in nonneg {
            if !(v >= 0.0 && v.is_finite()) {
                return Err(ModelError::Parameter(format!(
                    "{name} must be non-negative and finite, got {v}"
                )));
            }
        }
        if !self.eta.is_finite() {
            return Err(ModelError::Parameter(format!(
                "eta must be finite, got {}",
                self.eta
            )));
        }
        if !(0.0..=1.0).contains(&self.e_d) {
            return Err(ModelError::Parameter(format!(
                "e_d must lie in [0, 1], got {}",
                self.e_d
            )));
        }
        Ok(self.regime_flags())
    }

    pub fn regime_flags(&self) -> RegimeFlags {
        let cavity_ratio = self.gamma_c / self.omega_m;
        let damping_ratio = if self.gamma_m > 0.0 {
            self.omega_m / self.gamma_m
        } else {
            f64::INFINITY
        };
        let thermal_ratio = self.kT / (self.hbar * self.omega_m);
        RegimeFlags {
            cavity_ratio,
            bad_cavity: cavity_ratio >= REGIME_MARGIN,
            damping_ratio,
            weak_damping: damping_ratio >= REGIME_MARGIN,
            thermal_ratio,
            high_temperature: thermal_ratio >= REGIME_MARGIN,
        }
    }

    pub fn ell(&self) -> f64 {
        self.hbar / (2.0 * (self.m * self.kT).sqrt())
    }

    pub fn big_gamma(&self) -> f64 {
        2.0 * self.m * self.gamma_m
    }

    pub fn q_factor(&self) -> f64 {
        self.m * self.omega_m / self.big_gamma()
    }

    pub fn alpha0_abs(&self) -> f64 {
        2.0 * self.E_drive / self.gamma_c
    }

    pub fn signal_multiplier(&self) -> f64 {
        8.0 * self.kappa * self.E_drive / self.gamma_c
    }

    pub fn constant_force(&self) -> f64 {
        4.0 * self.kappa * self.E_drive.powi(2) / self.gamma_c.powi(2)
    }

    pub fn meas_coefficient(&self) -> f64 {
        (8.0 * self.kappa.powi(2) * self.E_drive.powi(2) / self.gamma_c.powi(3)).sqrt()
    }

    pub fn spring_constant(&self) -> f64 {
        self.m * self.omega_m.powi(2)
    }

    pub fn derived(&self) -> DerivedParams {
        DerivedParams {
            ell: self.ell(),
            big_gamma: self.big_gamma(),
            q_factor: self.q_factor(),
            q_factor_alt: self.omega_m / self.gamma_m,
            alpha0_abs: self.alpha0_abs(),
            signal_multiplier: self.signal_multiplier(),
            constant_force: self.constant_force(),
            meas_coefficient: self.meas_coefficient(),
            regime: self.regime_flags(),
        }
    }
}
