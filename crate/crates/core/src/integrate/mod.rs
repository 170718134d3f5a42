//! Time evolution: Schrödinger, Lindblad master equation, homodyne stochastic
//! master equation and quantum state diffusion.

mod compiled;
mod ensemble;
mod master;
mod output;
mod qsd;
mod unitary;
mod wiener;

pub use compiled::{energy_scale, CompiledGenerator};
pub use ensemble::{
    ensemble_map, ensemble_run, step_doubling_check, trajectory_seed, ConvergenceReport,
    EnsembleResult, EnsembleSpec,
};
pub use master::{evolve_master, evolve_sme};
pub use output::{read_binary, write_binary, write_csv, BINARY_MAGIC, BINARY_RECORD_BYTES};
pub use qsd::evolve_qsd;
pub use unitary::{compare_full_vs_rwa, evolve_unitary, CompareSpec, RwaComparison};
pub use wiener::WienerPath;

use crate::hilbert::{CompositeState, DensityOperator, HilbertError};
use crate::model::ModelError;
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum IntegrateError {
    #[error("dt = {dt} times energy scale {scale:.3e} is {product:.3} >= 1")]
    StepTooLarge { dt: f64, scale: f64, product: f64 },
    #[error("trace drifted by {0:.3e}")]
    TraceDrift(f64),
    #[error("state asymmetry {0:.3e} exceeds 1e-9 before symmetrization")]
    Asymmetry(f64),
    #[error("density matrix eigenvalue {value:.3e} at t = {t}")]
    Positivity { value: f64, t: f64 },
    #[error("pre-normalization norm {norm} at t = {t} left [0.5, 2]; reduce dt")]
    NormBlowup { norm: f64, t: f64 },
    #[error("non-finite state at t = {0}")]
    NonFinite(f64),
    #[error("estimated cost {cost:.3e} exceeds budget {budget:.3e}")]
    Budget { cost: f64, budget: f64 },
    #[error("invalid solver input: {0}")]
    Invalid(String),
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Hilbert(#[from] HilbertError),
    #[error("i/o: {0}")]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Scheme {
    Rk4Unitary,
    Rk4Lindblad,
    /// RK4 on the deterministic drift, Itô increment from the start of the step.
    EulerMaruyama,
    /// As `EulerMaruyama` plus a derivative-free diagonal Milstein correction.
    MilsteinDiag,
}

impl Scheme {
    pub fn name(&self) -> &'static str {
        match self {
            Scheme::Rk4Unitary => "rk4_unitary",
            Scheme::Rk4Lindblad => "rk4_lindblad",
            Scheme::EulerMaruyama => "euler_maruyama",
            Scheme::MilsteinDiag => "milstein_diag",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SolverConfig {
    pub dt: f64,
    pub scheme: Scheme,
    #[serde(default = "default_true")]
    pub renormalize_each_step: bool,
    pub seed: u64,
    #[serde(default = "default_stride")]
    pub record_stride: usize,
    /// Keep the state at every recorded time.
    #[serde(default)]
    pub record_states: bool,
    /// Top-Fock-level population that triggers a truncation warning.
    #[serde(default = "default_truncation")]
    pub truncation_threshold: f64,
}

fn default_true() -> bool {
    true
}
fn default_stride() -> usize {
    1
}
fn default_truncation() -> f64 {
    1e-6
}

impl SolverConfig {
    pub fn new(dt: f64, scheme: Scheme) -> Self {
        Self {
            dt,
            scheme,
            // stochastic schemes renormalize; the deterministic ones are monitored instead
            renormalize_each_step: matches!(scheme, Scheme::EulerMaruyama | Scheme::MilsteinDiag),
            seed: 0,
            record_stride: 1,
            record_states: false,
            truncation_threshold: default_truncation(),
        }
    }

    pub fn with_stride(mut self, stride: usize) -> Self {
        self.record_stride = stride.max(1);
        self
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }

    pub fn with_states(mut self, on: bool) -> Self {
        self.record_states = on;
        self
    }

    pub fn validate(&self) -> Result<(), IntegrateError> {
        if !(self.dt > 0.0 && self.dt.is_finite()) {
            return Err(IntegrateError::Invalid(format!(
                "dt must be positive, got {}",
                self.dt
            )));
        }
        if self.record_stride == 0 {
            return Err(IntegrateError::Invalid("record_stride must be >= 1".into()));
        }
        Ok(())
    }

    pub fn record_dt(&self) -> f64 {
        self.dt * self.record_stride as f64
    }
}

/// Final state of a run.
#[derive(Debug, Clone, PartialEq)]
pub enum StateSnapshot {
    Pure(CompositeState),
    Mixed(DensityOperator),
}

/// Per-step quality monitors.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StepDiagnostics {
    /// Extremes of the norm before renormalization (pure-state solvers).
    pub min_pre_norm: f64,
    pub max_pre_norm: f64,
    /// Largest |tr ρ − 1| seen (density solvers).
    pub max_trace_drift: f64,
    /// Smallest eigenvalue of ρ at recorded times (density solvers).
    pub min_eigenvalue: f64,
    /// dt × generator norm.
    pub dt_scale_product: f64,
    pub warnings: Vec<String>,
}

impl Default for StepDiagnostics {
    fn default() -> Self {
        Self {
            min_pre_norm: 1.0,
            max_pre_norm: 1.0,
            max_trace_drift: 0.0,
            min_eigenvalue: 0.0,
            dt_scale_product: 0.0,
            warnings: Vec::new(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrajectoryMeta {
    pub preset: String,
    pub seed: u64,
    pub scheme: Scheme,
    pub dt: f64,
}

/// One realization: recorded expectations and noise increments.
///
/// `dw[c][k]` is the channel-`c` Wiener increment accumulated over
/// `(times[k-1], times[k]]`; `dw[c][0]` is zero.
#[derive(Debug, Clone, PartialEq)]
pub struct TrajectoryResult {
    pub times: Vec<f64>,
    pub z: Vec<f64>,
    pub p: Vec<f64>,
    pub sz: Vec<f64>,
    pub dw: Vec<Vec<f64>>,
    pub record_dt: f64,
    pub states: Vec<StateSnapshot>,
    pub final_state: StateSnapshot,
    pub truncation_warning: bool,
    pub max_top_population: f64,
    pub diagnostics: StepDiagnostics,
    pub meta: TrajectoryMeta,
}

impl TrajectoryResult {
    /// Increment record of the measurement channel, when present.
    pub fn measurement_record(&self) -> Option<&[f64]> {
        self.dw
            .get(MEASUREMENT_CHANNEL)
            .map(|v| v.as_slice())
            .filter(|v| !v.is_empty())
    }
}

/// Index of the thermal (averaged-over) channel.
pub const THERMAL_CHANNEL: usize = 0;
/// Index of the physical measurement channel.
pub const MEASUREMENT_CHANNEL: usize = 1;

/// Reject `dt` when the step is unresolvable, warn when it is marginal.
pub(crate) fn check_dt(
    dt: f64,
    scale: f64,
    diag: &mut StepDiagnostics,
) -> Result<(), IntegrateError> {
    let product = dt * scale;
    diag.dt_scale_product = product;
    if product >= 1.0 {
        return Err(IntegrateError::StepTooLarge { dt, scale, product });
    }
    if product >= 0.1 {
        let msg = format!("dt x energy scale = {product:.3} >= 0.1");
        log::warn!("{msg}");
        diag.warnings.push(msg);
    }
    Ok(())
}
