//! Physical model: parameters, drive, adiabatic spin frame, Hamiltonians and
//! Lindblad operators.

mod drive;
mod frame;
mod hamiltonian;
mod params;

pub use drive::{DriveProfile, CONTINUITY_TOL};
pub use frame::{
    adaptive_simpson, adiabaticity_report, lambda_theta, lambda_theta_at, spin_decomposition,
    AdiabaticFrame, AdiabaticityReport, ADIABATIC_THRESHOLD, PHASE_REL_TOL,
};
pub use hamiltonian::{
    dissipator, hamiltonian_eff, hamiltonian_eff_op, hamiltonian_full, hamiltonian_full_op,
    hamiltonian_rwa, hamiltonian_rwa_op, lindblad_meas, lindblad_thermal, Coefficient,
    ModelOperators, RwaSign, TimeDependentOp,
};
pub use params::{DerivedParams, PhysParams, RegimeFlags, REGIME_MARGIN};

use crate::hilbert::HilbertError;
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ModelError {
    #[error("invalid parameter: {0}")]
    Parameter(String),
    #[error("invalid drive profile: {0}")]
    Drive(String),
    #[error("time {t} outside [{lo}, {hi}]")]
    OutOfRange { t: f64, lo: f64, hi: f64 },
    #[error("phase quadrature did not converge on [{a}, {b}]")]
    Quadrature { a: f64, b: f64 },
    #[error("spin amplitudes have norm² {0}, expected 1")]
    Unnormalized(f64),
    #[error(transparent)]
    Hilbert(#[from] HilbertError),
}
