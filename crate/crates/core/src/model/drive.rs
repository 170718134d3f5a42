use super::ModelError;
use serde::{Deserialize, Serialize};

pub const CONTINUITY_TOL: f64 = 1e-9;

/// Frequency-modulation function f(t).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum DriveProfile {
    /// `f0 + slope·t` up to `t_switch`, then `amplitude·sin(omega·(t − t_switch))`.
    PaperRampSine {
        f0: f64,
        slope: f64,
        t_switch: f64,
        amplitude: f64,
        omega: f64,
    },
    Constant {
        value: f64,
    },
    /// Linear interpolation between samples.
    Table {
        t: Vec<f64>,
        f: Vec<f64>,
    },
}

impl DriveProfile {
    /// −6000 + 300t up to t = 20, then 1000 sin(t − 20).
    pub fn reference() -> Self {
        DriveProfile::PaperRampSine {
            f0: -6000.0,
            slope: 300.0,
            t_switch: 20.0,
            amplitude: 1000.0,
            omega: 1.0,
        }
    }

    pub fn validate(&self) -> Result<(), ModelError> {
        match self {
            DriveProfile::PaperRampSine {
                f0,
                slope,
                t_switch,
                amplitude,
                omega,
            } => {
                if ![f0, slope, t_switch, amplitude, omega]
                    .iter()
                    .all(|v| v.is_finite())
                {
                    return Err(ModelError::Drive("non-finite ramp/sine parameter".into()));
                }
                if *t_switch < 0.0 || *omega <= 0.0 {
                    return Err(ModelError::Drive(
                        "t_switch must be >= 0 and omega > 0".into(),
                    ));
                }
                let jump = (f0 + slope * t_switch).abs();
                if jump > CONTINUITY_TOL * f0.abs().max(1.0) {
                    return Err(ModelError::Drive(format!(
                        "ramp ends at {jump:e} but the sine starts at 0"
                    )));
                }
                Ok(())
            }
            DriveProfile::Constant { value } => {
                if value.is_finite() {
                    Ok(())
                } else {
                    Err(ModelError::Drive("non-finite constant drive".into()))
                }
            }
            DriveProfile::Table { t, f } => {
                if t.len() < 2 || t.len() != f.len() {
                    return Err(ModelError::Drive(
                        "table needs >= 2 (t, f) pairs of equal length".into(),
                    ));
                }
                if t.windows(2).any(|w| !(w[1] > w[0])) {
                    return Err(ModelError::Drive(
                        "table times must be strictly increasing".into(),
                    ));
                }
                if f.iter().chain(t).any(|v| !v.is_finite()) {
                    return Err(ModelError::Drive("non-finite table entry".into()));
                }
                Ok(())
            }
        }
    }

    /// Drive value at `t`.
    pub fn f(&self, t: f64) -> Result<f64, ModelError> {
        match self {
            DriveProfile::PaperRampSine {
                f0,
                slope,
                t_switch,
                amplitude,
                omega,
            } => {
                if t <= *t_switch {
                    Ok(f0 + slope * t)
                } else {
                    Ok(amplitude * (omega * (t - t_switch)).sin())
                }
            }
            DriveProfile::Constant { value } => Ok(*value),
            DriveProfile::Table { t: ts, f } => {
                let k = table_segment(ts, t)?;
                let w = (t - ts[k]) / (ts[k + 1] - ts[k]);
                Ok(f[k] * (1.0 - w) + f[k + 1] * w)
            }
        }
    }

    /// `df/dt` (left derivative at a switch point).
    pub fn derivative(&self, t: f64) -> Result<f64, ModelError> {
        match self {
            DriveProfile::PaperRampSine {
                slope,
                t_switch,
                amplitude,
                omega,
                ..
            } => {
                if t <= *t_switch {
                    Ok(*slope)
                } else {
                    Ok(amplitude * omega * (omega * (t - t_switch)).cos())
                }
            }
            DriveProfile::Constant { .. } => Ok(0.0),
            DriveProfile::Table { t: ts, f } => {
                let k = table_segment(ts, t)?;
                Ok((f[k + 1] - f[k]) / (ts[k + 1] - ts[k]))
            }
        }
    }

    /// Points where the integrand of the accumulated phase has kinks.
    pub fn breakpoints(&self) -> Vec<f64> {
        match self {
            DriveProfile::PaperRampSine { t_switch, .. } => vec![*t_switch],
            DriveProfile::Constant { .. } => vec![],
            DriveProfile::Table { t, .. } => t.clone(),
        }
    }

    /// Last time at which the profile is defined.
    pub fn t_max(&self) -> f64 {
        match self {
            DriveProfile::Table { t, .. } => *t.last().unwrap_or(&0.0),
            _ => f64::INFINITY,
        }
    }

    /// Time at which the ramp ends (0 for profiles without one).
    pub fn ramp_end(&self) -> f64 {
        match self {
            DriveProfile::PaperRampSine { t_switch, .. } => *t_switch,
            _ => 0.0,
        }
    }

    /// Modulation angular frequency of the periodic part, when there is one.
    pub fn modulation_omega(&self) -> Option<f64> {
        match self {
            DriveProfile::PaperRampSine { omega, .. } => Some(*omega),
            _ => None,
        }
    }
}

fn table_segment(ts: &[f64], t: f64) -> Result<usize, ModelError> {
    let (lo, hi) = (ts[0], ts[ts.len() - 1]);
    if !(t >= lo && t <= hi) {
        return Err(ModelError::OutOfRange { t, lo, hi });
    }
    let k = ts.partition_point(|&x| x <= t).saturating_sub(1);
    Ok(k.min(ts.len() - 2))
}
