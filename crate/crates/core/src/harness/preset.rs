use super::HarnessError;
use crate::model::{DriveProfile, PhysParams};
use serde::{Deserialize, Serialize};

const DESK_SMALL: &str = include_str!("../../presets/desk-small.toml");
const PAPER_SEC7: &str = include_str!("../../presets/paper-sec7.toml");

/// Run settings a preset supplies when the config leaves them out.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunDefaults {
    pub fock: usize,
    pub dt: f64,
    /// Step of the conditioned density-matrix solver, which needs a finer
    /// step than pure-state solvers to stay positive.
    pub sme_dt: f64,
    pub t_end: f64,
    pub record_interval: f64,
    pub bin_width: f64,
    pub compare_t_end: f64,
    pub dt_full: f64,
    /// Time by which every trajectory's spin should have collapsed.
    pub collapse_deadline: f64,
}

/// Coupling constants recovered from the three monitoring coefficients
/// `s = 8κE/γ_c`, `c = 4κE²/γ_c²`, `μ = √(8κ²E²/γ_c³)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MonitoringResolution {
    pub signal_multiplier: f64,
    pub constant_force: f64,
    pub meas_coefficient: f64,
    /// κE/γ_c = s/8.
    pub kappa_e_over_gamma: f64,
    /// E/γ_c = 2c/s.
    pub e_over_gamma: f64,
    /// γ_c = 8(κE/γ_c)²/μ².
    pub gamma_c: f64,
    pub e_drive: f64,
    pub kappa: f64,
}

impl MonitoringResolution {
    pub fn solve(
        signal_multiplier: f64,
        constant_force: f64,
        meas_coefficient: f64,
    ) -> Result<Self, HarnessError> {
        if ![signal_multiplier, constant_force, meas_coefficient]
            .iter()
            .all(|v| *v > 0.0 && v.is_finite())
        {
            return Err(HarnessError::Config(
                "monitoring coefficients must be positive".into(),
            ));
        }
        let ke = signal_multiplier / 8.0;
        let e_over_gamma = 2.0 * constant_force / signal_multiplier;
        let gamma_c = 8.0 * ke * ke / (meas_coefficient * meas_coefficient);
        Ok(Self {
            signal_multiplier,
            constant_force,
            meas_coefficient,
            kappa_e_over_gamma: ke,
            e_over_gamma,
            gamma_c,
            e_drive: e_over_gamma * gamma_c,
            kappa: ke / e_over_gamma,
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Preset {
    pub name: String,
    pub description: String,
    /// Values picked for this implementation rather than taken from a reference set.
    pub artifact_chosen: bool,
    pub params: PhysParams,
    pub drive: DriveProfile,
    pub run: RunDefaults,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub resolution: Option<MonitoringResolution>,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct Monitoring {
    signal_multiplier: f64,
    constant_force: f64,
    meas_coefficient: f64,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct PresetFile {
    name: String,
    description: String,
    artifact_chosen: bool,
    params: toml::Table,
    monitoring: Option<Monitoring>,
    drive: DriveProfile,
    run: RunDefaults,
}

pub fn preset_names() -> &'static [&'static str] {
    &["desk-small", "paper-sec7"]
}

/// The embedded TOML text of a preset.
pub fn preset_source(name: &str) -> Result<&'static str, HarnessError> {
    match name {
        "desk-small" => Ok(DESK_SMALL),
        "paper-sec7" => Ok(PAPER_SEC7),
        _ => Err(HarnessError::UnknownPreset(name.to_string())),
    }
}

pub fn preset(name: &str) -> Result<Preset, HarnessError> {
    let file: PresetFile =
        toml::from_str(preset_source(name)?).map_err(|e| HarnessError::Parse(e.to_string()))?;
    let mut table = file.params;
    let resolution = match file.monitoring {
        Some(m) => {
            let r = MonitoringResolution::solve(
                m.signal_multiplier,
                m.constant_force,
                m.meas_coefficient,
            )?;
            table.insert("kappa".into(), r.kappa.into());
            table.insert("E_drive".into(), r.e_drive.into());
            table.insert("gamma_c".into(), r.gamma_c.into());
            Some(r)
        }
        None => None,
    };
    let params: PhysParams = table
        .try_into()
        .map_err(|e: toml::de::Error| HarnessError::Parse(e.to_string()))?;
    params.validate()?;
    file.drive.validate()?;
    Ok(Preset {
        name: file.name,
        description: file.description,
        artifact_chosen: file.artifact_chosen,
        params,
        drive: file.drive,
        run: file.run,
        resolution,
    })
}
