//! Presets, run configuration, validation and experiment orchestration.

mod config;
mod preset;
mod run;
mod validate;

pub use config::{
    CompareSettings, ExperimentKind, InitialState, ReadoutSettings, Resolved, RunConfig,
    SolverSettings, SpectrumSettings, SpinInit,
};
pub use preset::{preset, preset_names, preset_source, MonitoringResolution, Preset, RunDefaults};
pub use run::{
    check_writable, classify_ensemble, reference_phase, run, ExperimentOutput, OutputFile,
    ReadoutRow, RunManifest, CODE_VERSION,
};
pub use validate::{
    truncation_estimate, validate, CostEstimate, Diagnostics, TruncationAdvisory, DEFAULT_MAX_COST,
};

use crate::integrate::IntegrateError;
use crate::measure::MeasureError;
use crate::model::ModelError;
use crate::spectra::SpectraError;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum HarnessError {
    #[error("unknown preset {0:?}; known presets: desk-small, paper-sec7")]
    UnknownPreset(String),
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("config parse error: {0}")]
    Parse(String),
    #[error("estimated cost {cost:.3e} exceeds the budget {budget:.3e}")]
    Infeasible { cost: f64, budget: f64 },
    #[error("output directory {path}: {reason}")]
    Output { path: String, reason: String },
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Solver(#[from] IntegrateError),
    #[error(transparent)]
    Measure(#[from] MeasureError),
    #[error(transparent)]
    Spectra(#[from] SpectraError),
    #[error("i/o: {0}")]
    Io(#[from] std::io::Error),
}

impl HarnessError {
    /// Process exit status: 1 for configuration problems, 2 for solver failures.
    pub fn exit_code(&self) -> i32 {
        match self {
            HarnessError::Solver(_)
            | HarnessError::Measure(_)
            | HarnessError::Spectra(_)
            | HarnessError::Io(_) => 2,
            _ => 1,
        }
    }
}

/// Exit status of a run that completed with warnings.
pub const EXIT_WARNINGS: i32 = 3;
