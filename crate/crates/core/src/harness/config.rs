use super::preset::{preset, RunDefaults};
use super::HarnessError;
use crate::integrate::Scheme;
use crate::measure::default_window;
use crate::model::{DriveProfile, PhysParams, RwaSign};
use crate::spectra::DeltaConvention;
use serde::{Deserialize, Serialize};
use std::path::PathBuf;
use std::str::FromStr;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ExperimentKind {
    /// Full versus rotating-wave Hamiltonian, noise-free.
    UnitaryCompare,
    /// Unconditioned Lindblad evolution under thermal noise and measurement.
    Master,
    /// Homodyne-conditioned density matrix.
    Sme,
    /// Pure-state trajectories with both noise channels.
    QsdEnsemble,
    SnrReport,
    NoiseSpectrum,
    /// Trajectories, photocurrent synthesis and spin classification.
    ReadoutStudy,
}

impl ExperimentKind {
    pub const ALL: [ExperimentKind; 7] = [
        ExperimentKind::UnitaryCompare,
        ExperimentKind::Master,
        ExperimentKind::Sme,
        ExperimentKind::QsdEnsemble,
        ExperimentKind::SnrReport,
        ExperimentKind::NoiseSpectrum,
        ExperimentKind::ReadoutStudy,
    ];

    pub fn name(&self) -> &'static str {
        match self {
            ExperimentKind::UnitaryCompare => "unitary_compare",
            ExperimentKind::Master => "master",
            ExperimentKind::Sme => "sme",
            ExperimentKind::QsdEnsemble => "qsd_ensemble",
            ExperimentKind::SnrReport => "snr_report",
            ExperimentKind::NoiseSpectrum => "noise_spectrum",
            ExperimentKind::ReadoutStudy => "readout_study",
        }
    }

    /// Whether the experiment evolves a state at all.
    pub fn is_dynamical(&self) -> bool {
        !matches!(
            self,
            ExperimentKind::SnrReport | ExperimentKind::NoiseSpectrum
        )
    }

    fn default_scheme(&self) -> Scheme {
        match self {
            ExperimentKind::UnitaryCompare => Scheme::Rk4Unitary,
            ExperimentKind::Master => Scheme::Rk4Lindblad,
            _ => Scheme::EulerMaruyama,
        }
    }

    fn default_n_traj(&self) -> usize {
        match self {
            ExperimentKind::QsdEnsemble => 10,
            ExperimentKind::ReadoutStudy => 200,
            _ => 1,
        }
    }
}

impl FromStr for ExperimentKind {
    type Err = HarnessError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Self::ALL
            .into_iter()
            .find(|k| k.name() == s)
            .ok_or_else(|| HarnessError::Config(format!("unknown experiment kind {s:?}")))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SpinInit {
    Up,
    Down,
    /// (|↑⟩ + |↓⟩)/√2 in the instantaneous eigenbasis.
    Superposition,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SolverSettings {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub dt: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub scheme: Option<Scheme>,
    /// Spacing of recorded samples; a multiple of `dt`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub record_interval: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub truncation_threshold: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InitialState {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub spin: Option<SpinInit>,
    /// Coherent amplitude (re, im) of the cantilever; zero is the ground state.
    #[serde(default)]
    pub alpha: [f64; 2],
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ReadoutSettings {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub bin_width: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub window: Option<[f64; 2]>,
    /// Collapse deadline used in the summary statistics.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub deadline: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CompareSettings {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub t_end: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub dt_full: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub density_times: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub z_half_width: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub z_points: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub rwa_sign: Option<RwaSign>,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SpectrumSettings {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub omega_min: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub omega_max: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub n_omega: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub convention: Option<DeltaConvention>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub bandwidths: Option<Vec<f64>>,
}

/// A run as written by the user. Unset fields fall back to the preset's
/// run defaults; `params` entries override individual preset parameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub kind: ExperimentKind,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub preset: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub fock: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub t_end: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub n_traj: Option<usize>,
    #[serde(default)]
    pub base_seed: u64,
    /// Worker threads; 0 uses every core.
    #[serde(default)]
    pub workers: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub out_dir: Option<PathBuf>,
    /// Write trajectories to one binary file instead of per-trajectory CSV.
    #[serde(default)]
    pub binary: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub max_cost: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub params: Option<toml::Table>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub drive: Option<DriveProfile>,
    #[serde(default)]
    pub solver: SolverSettings,
    #[serde(default)]
    pub initial: InitialState,
    #[serde(default)]
    pub readout: ReadoutSettings,
    #[serde(default)]
    pub compare: CompareSettings,
    #[serde(default)]
    pub spectrum: SpectrumSettings,
}

pub const DEFAULT_OUT_DIR: &str = "spinmrfm-out";

impl RunConfig {
    pub fn new(kind: ExperimentKind, preset: &str) -> Self {
        Self {
            kind,
            preset: Some(preset.to_string()),
            fock: None,
            t_end: None,
            n_traj: None,
            base_seed: 0,
            workers: 0,
            out_dir: None,
            binary: false,
            max_cost: None,
            params: None,
            drive: None,
            solver: SolverSettings::default(),
            initial: InitialState::default(),
            readout: ReadoutSettings::default(),
            compare: CompareSettings::default(),
            spectrum: SpectrumSettings::default(),
        }
    }

    pub fn from_toml(text: &str) -> Result<Self, HarnessError> {
        toml::from_str(text).map_err(|e| HarnessError::Parse(e.to_string()))
    }

    pub fn to_toml(&self) -> Result<String, HarnessError> {
        toml::to_string(self).map_err(|e| HarnessError::Parse(e.to_string()))
    }

    /// Fill every unset field and check the result.
    pub fn resolve(&self) -> Result<Resolved, HarnessError> {
        let (mut table, base_drive, defaults) = match &self.preset {
            Some(name) => {
                let p = preset(name)?;
                let table = toml::Table::try_from(&p.params)
                    .map_err(|e| HarnessError::Parse(e.to_string()))?;
                (table, Some(p.drive), p.run)
            }
            None => {
                if self.params.is_none() || self.drive.is_none() {
                    return Err(HarnessError::Config(
                        "without a preset, [params] and [drive] are both required".into(),
                    ));
                }
                (toml::Table::new(), None, preset("desk-small")?.run)
            }
        };
        if let Some(over) = &self.params {
            for (k, v) in over {
                table.insert(k.clone(), v.clone());
            }
        }
        let params: PhysParams = table
            .try_into()
            .map_err(|e: toml::de::Error| HarnessError::Parse(e.to_string()))?;
        params.validate()?;
        let drive = self.drive.clone().or(base_drive).expect("drive present");
        drive.validate()?;
        self.resolve_with(params, drive, &defaults)
    }

    fn resolve_with(
        &self,
        params: PhysParams,
        drive: DriveProfile,
        d: &RunDefaults,
    ) -> Result<Resolved, HarnessError> {
        let kind = self.kind;
        let bad = |msg: String| Err(HarnessError::Config(msg));
        let scheme = self.solver.scheme.unwrap_or(kind.default_scheme());
        let scheme_ok = match kind {
            ExperimentKind::UnitaryCompare => scheme == Scheme::Rk4Unitary,
            ExperimentKind::Master => scheme == Scheme::Rk4Lindblad,
            ExperimentKind::Sme => matches!(scheme, Scheme::EulerMaruyama | Scheme::MilsteinDiag),
            ExperimentKind::QsdEnsemble | ExperimentKind::ReadoutStudy => {
                matches!(scheme, Scheme::EulerMaruyama | Scheme::MilsteinDiag)
            }
            ExperimentKind::SnrReport | ExperimentKind::NoiseSpectrum => true,
        };
        if !scheme_ok {
            return bad(format!(
                "scheme {} does not apply to {}",
                scheme.name(),
                kind.name()
            ));
        }
        let dt = self.solver.dt.unwrap_or(if kind == ExperimentKind::Sme {
            d.sme_dt
        } else {
            d.dt
        });
        let fock = self.fock.unwrap_or(d.fock);
        let t_end = self.t_end.unwrap_or(d.t_end);
        let record_interval = self
            .solver
            .record_interval
            .unwrap_or(d.record_interval.max(dt));
        let compare_t_end = self.compare.t_end.unwrap_or(d.compare_t_end);
        let dt_full = self.compare.dt_full.unwrap_or(d.dt_full);
        let positive = [
            ("dt", dt),
            ("t_end", t_end),
            ("record_interval", record_interval),
            ("compare.t_end", compare_t_end),
            ("compare.dt_full", dt_full),
        ];
        for (name, v) in positive {
            if !(v > 0.0 && v.is_finite()) {
                return bad(format!("{name} must be positive, got {v}"));
            }
        }
        if fock < 2 {
            return bad(format!("fock must be >= 2, got {fock}"));
        }
        let span = if kind == ExperimentKind::UnitaryCompare {
            compare_t_end
        } else {
            t_end
        };
        let mut steps_to_check = vec![dt];
        if kind == ExperimentKind::UnitaryCompare {
            steps_to_check.push(dt_full);
        }
        for step in steps_to_check {
            if !is_multiple(record_interval, step) {
                return bad(format!(
                    "record_interval {record_interval} is not a multiple of dt {step}"
                ));
            }
            if !is_multiple(span, step) {
                return bad(format!("run length {span} is not a multiple of dt {step}"));
            }
        }
        let n_traj = self.n_traj.unwrap_or(kind.default_n_traj());
        if n_traj == 0 {
            return bad("n_traj must be >= 1".into());
        }
        let truncation_threshold = self.solver.truncation_threshold.unwrap_or(1e-6);
        let bin_width = self
            .readout
            .bin_width
            .unwrap_or(d.bin_width.max(record_interval));
        if bin_width < record_interval * (1.0 - 1e-9) {
            return bad(format!(
                "bin_width {bin_width} is shorter than record_interval {record_interval}"
            ));
        }
        let window = match self.readout.window {
            Some(w) => w,
            None => {
                let (a, b) = default_window(drive.ramp_end(), params.omega_m, t_end);
                [a, b]
            }
        };
        if kind == ExperimentKind::ReadoutStudy
            && !(window[0] < window[1] && window[1] <= t_end + 1e-9)
        {
            return bad(format!(
                "readout window {window:?} must be increasing and end by t_end = {t_end}"
            ));
        }
        let density_times = self
            .compare
            .density_times
            .clone()
            .unwrap_or_else(|| (1..=5).map(|k| compare_t_end * k as f64 / 5.0).collect());
        if density_times
            .iter()
            .any(|t| !(*t >= 0.0 && *t <= compare_t_end + 1e-9))
        {
            return bad("compare.density_times must lie in [0, compare.t_end]".into());
        }
        let reach = (2.0 * params.hbar * fock as f64 / (params.m * params.omega_m)).sqrt();
        let omega_min = self.spectrum.omega_min.unwrap_or(0.5 * params.omega_m);
        let omega_max = self.spectrum.omega_max.unwrap_or(1.5 * params.omega_m);
        let n_omega = self.spectrum.n_omega.unwrap_or(1001);
        if !(omega_min > 0.0 && omega_max > omega_min && n_omega >= 2) {
            return bad("spectrum grid needs 0 < omega_min < omega_max and n_omega >= 2".into());
        }
        let bandwidths = self
            .spectrum
            .bandwidths
            .clone()
            .unwrap_or_else(|| vec![1.0]);
        let initial_spin = self.initial.spin.unwrap_or(match kind {
            ExperimentKind::UnitaryCompare => SpinInit::Up,
            _ => SpinInit::Superposition,
        });
        Ok(Resolved {
            kind,
            preset: self.preset.clone(),
            params,
            drive,
            fock,
            t_end,
            dt,
            scheme,
            record_interval,
            truncation_threshold,
            n_traj,
            base_seed: self.base_seed,
            workers: self.workers,
            out_dir: self
                .out_dir
                .clone()
                .unwrap_or_else(|| PathBuf::from(DEFAULT_OUT_DIR)),
            binary: self.binary,
            max_cost: self.max_cost.unwrap_or(super::DEFAULT_MAX_COST),
            spin: initial_spin,
            alpha: self.initial.alpha,
            bin_width,
            window,
            deadline: self.readout.deadline.unwrap_or(d.collapse_deadline),
            compare_t_end,
            dt_full,
            density_times,
            z_half_width: self.compare.z_half_width.unwrap_or(reach),
            z_points: self.compare.z_points.unwrap_or(401),
            rwa_sign: self.compare.rwa_sign.unwrap_or_default(),
            omega_min,
            omega_max,
            n_omega,
            convention: self.spectrum.convention.unwrap_or_default(),
            bandwidths,
        })
    }
}

fn is_multiple(x: f64, step: f64) -> bool {
    let n = (x / step).round();
    n >= 1.0 && (n * step - x).abs() <= 1e-9 * x
}

/// A fully specified run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Resolved {
    pub kind: ExperimentKind,
    pub preset: Option<String>,
    pub params: PhysParams,
    pub drive: DriveProfile,
    pub fock: usize,
    pub t_end: f64,
    pub dt: f64,
    pub scheme: Scheme,
    pub record_interval: f64,
    pub truncation_threshold: f64,
    pub n_traj: usize,
    pub base_seed: u64,
    pub workers: usize,
    pub out_dir: PathBuf,
    pub binary: bool,
    pub max_cost: f64,
    pub spin: SpinInit,
    pub alpha: [f64; 2],
    pub bin_width: f64,
    pub window: [f64; 2],
    pub deadline: f64,
    pub compare_t_end: f64,
    pub dt_full: f64,
    pub density_times: Vec<f64>,
    pub z_half_width: f64,
    pub z_points: usize,
    pub rwa_sign: RwaSign,
    pub omega_min: f64,
    pub omega_max: f64,
    pub n_omega: usize,
    pub convention: DeltaConvention,
    pub bandwidths: Vec<f64>,
}

impl Resolved {
    pub fn record_stride(&self) -> usize {
        (self.record_interval / self.dt).round() as usize
    }

    /// Length of the evolved interval.
    pub fn span(&self) -> f64 {
        match self.kind {
            ExperimentKind::UnitaryCompare => self.compare_t_end,
            _ => self.t_end,
        }
    }

    pub fn omega_grid(&self) -> Vec<f64> {
        let n = self.n_omega;
        (0..n)
            .map(|k| self.omega_min + (self.omega_max - self.omega_min) * k as f64 / (n - 1) as f64)
            .collect()
    }

    pub fn z_grid(&self) -> Vec<f64> {
        let n = self.z_points.max(2);
        let w = self.z_half_width;
        (0..n)
            .map(|k| -w + 2.0 * w * k as f64 / (n - 1) as f64)
            .collect()
    }

    /// The same run with every field written out, so the echo alone
    /// reproduces it.
    pub fn echo(&self) -> RunConfig {
        RunConfig {
            kind: self.kind,
            preset: self.preset.clone(),
            fock: Some(self.fock),
            t_end: Some(self.t_end),
            n_traj: Some(self.n_traj),
            base_seed: self.base_seed,
            workers: self.workers,
            out_dir: Some(self.out_dir.clone()),
            binary: self.binary,
            max_cost: Some(self.max_cost),
            params: toml::Table::try_from(&self.params).ok(),
            drive: Some(self.drive.clone()),
            solver: SolverSettings {
                dt: Some(self.dt),
                scheme: Some(self.scheme),
                record_interval: Some(self.record_interval),
                truncation_threshold: Some(self.truncation_threshold),
            },
            initial: InitialState {
                spin: Some(self.spin),
                alpha: self.alpha,
            },
            readout: ReadoutSettings {
                bin_width: Some(self.bin_width),
                window: Some(self.window),
                deadline: Some(self.deadline),
            },
            compare: CompareSettings {
                t_end: Some(self.compare_t_end),
                dt_full: Some(self.dt_full),
                density_times: Some(self.density_times.clone()),
                z_half_width: Some(self.z_half_width),
                z_points: Some(self.z_points),
                rwa_sign: Some(self.rwa_sign),
            },
            spectrum: SpectrumSettings {
                omega_min: Some(self.omega_min),
                omega_max: Some(self.omega_max),
                n_omega: Some(self.n_omega),
                convention: Some(self.convention),
                bandwidths: Some(self.bandwidths.clone()),
            },
        }
    }
}
