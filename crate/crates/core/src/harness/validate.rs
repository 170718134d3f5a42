use super::config::{ExperimentKind, Resolved, RunConfig};
use crate::model::{
    adiabaticity_report, AdiabaticityReport, DriveProfile, PhysParams, RegimeFlags,
    ADIABATIC_THRESHOLD,
};
use crate::spectra::g_fourier;
use serde::{Deserialize, Serialize};

/// Default budget on the estimated work of one run.
pub const DEFAULT_MAX_COST: f64 = 1e12;

/// Work estimate: solver steps × matrix entries touched per step × runs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CostEstimate {
    pub steps: f64,
    pub dim: usize,
    pub runs: usize,
    pub work: f64,
    pub budget: f64,
    pub feasible: bool,
}

/// Expected excursion of ⟨Z⟩ against the position reach of the Fock basis.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TruncationAdvisory {
    /// Resonant force amplitude `|c₁|ħ` on one spin branch.
    pub force_amplitude: f64,
    /// Damping-limited driven amplitude at the end of the run.
    pub driven_amplitude: f64,
    /// Static offset from the constant radiation-pressure force.
    pub static_offset: f64,
    /// Three thermal standard deviations.
    pub thermal_spread: f64,
    pub expected_extent: f64,
    /// `√(ħN/(mω_m))`, the classical turning point of the top Fock level.
    pub reach: f64,
    pub n_levels: usize,
    pub advisory: bool,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct Diagnostics {
    pub errors: Vec<String>,
    pub warnings: Vec<String>,
    /// Facts worth reporting that need no action.
    pub notes: Vec<String>,
    pub regime: Option<RegimeFlags>,
    pub adiabaticity: Option<AdiabaticityReport>,
    pub cost: Option<CostEstimate>,
    pub truncation: Option<TruncationAdvisory>,
}

impl Diagnostics {
    pub fn is_valid(&self) -> bool {
        self.errors.is_empty()
    }
}

pub fn truncation_estimate(
    params: &PhysParams,
    drive: &DriveProfile,
    n_levels: usize,
    t_end: f64,
) -> TruncationAdvisory {
    let p = params;
    let c1 = g_fourier(p, drive, p.omega_m).unwrap_or(p.eta.abs());
    let force = c1 * p.hbar;
    let tau = (t_end - drive.ramp_end()).max(0.0);
    let growth = force / (2.0 * p.m * p.omega_m);
    let driven = if p.gamma_m > 0.0 {
        growth / p.gamma_m * (1.0 - (-p.gamma_m * tau).exp())
    } else {
        growth * tau
    };
    let static_offset = if p.drop_constant_force {
        0.0
    } else {
        p.constant_force() / p.spring_constant()
    };
    let thermal_spread = 3.0 * (p.kT / p.spring_constant()).sqrt();
    let expected_extent = driven + static_offset + thermal_spread;
    let reach = (p.hbar * n_levels as f64 / (p.m * p.omega_m)).sqrt();
    TruncationAdvisory {
        force_amplitude: force,
        driven_amplitude: driven,
        static_offset,
        thermal_spread,
        expected_extent,
        reach,
        n_levels,
        advisory: expected_extent > reach,
    }
}

fn cost(r: &Resolved) -> CostEstimate {
    let d = 2 * r.fock;
    let df = d as f64;
    let (steps, per_step, runs) = match r.kind {
        ExperimentKind::UnitaryCompare => (
            r.compare_t_end / r.dt + r.compare_t_end / r.dt_full,
            df * df,
            1,
        ),
        ExperimentKind::Master | ExperimentKind::Sme => (r.t_end / r.dt, df * df * df, r.n_traj),
        ExperimentKind::QsdEnsemble | ExperimentKind::ReadoutStudy => {
            (r.t_end / r.dt, df * df, r.n_traj)
        }
        ExperimentKind::SnrReport | ExperimentKind::NoiseSpectrum => (0.0, 0.0, 1),
    };
    let work = steps * per_step * runs as f64;
    CostEstimate {
        steps,
        dim: d,
        runs,
        work,
        budget: r.max_cost,
        feasible: work <= r.max_cost,
    }
}

/// Schema, range and regime checks. Never fails; problems are reported.
pub fn validate(config: &RunConfig) -> Diagnostics {
    match config.resolve() {
        Ok(r) => validate_resolved(&r),
        Err(e) => Diagnostics {
            errors: vec![e.to_string()],
            ..Diagnostics::default()
        },
    }
}

pub(crate) fn validate_resolved(r: &Resolved) -> Diagnostics {
    let mut diag = Diagnostics::default();
    let p = &r.params;
    let flags = p.regime_flags();
    if !flags.bad_cavity {
        diag.warnings.push(format!(
            "gamma_c/omega_m = {:.3} < 10: the cavity elimination requires that we operate in the ``bad cavity'' limit",
            flags.cavity_ratio
        ));
    }
    if !flags.weak_damping {
        diag.warnings.push(format!(
            "omega_m/gamma_m = {:.3} < 10: damping is not weak",
            flags.damping_ratio
        ));
    }
    if !flags.high_temperature {
        diag.notes.push(format!(
            "kT/(hbar omega_m) = {:.3}: below the high-temperature margin, high-T expansions are approximate",
            flags.thermal_ratio
        ));
    }
    diag.regime = Some(flags);
    if r.kind.is_dynamical() {
        match adiabaticity_report(p, &r.drive, 0.0, r.span(), ADIABATIC_THRESHOLD) {
            Ok(a) => {
                if !a.adiabatic {
                    diag.warnings.push(format!(
                        "drive is not adiabatic: ratio {:.3e} at t = {:.3} exceeds {:.0e}",
                        a.max_ratio, a.t_at_max, a.threshold
                    ));
                }
                diag.adiabaticity = Some(a);
            }
            Err(e) => diag.errors.push(e.to_string()),
        }
    }
    let c = cost(r);
    if !c.feasible {
        diag.errors.push(format!(
            "estimated work {:.3e} exceeds the budget {:.3e}",
            c.work, c.budget
        ));
    }
    diag.cost = Some(c);
    let t = truncation_estimate(p, &r.drive, r.fock, r.span());
    if t.advisory {
        let msg = format!(
            "expected |Z| extent {:.3e} exceeds the reach {:.3} of N = {} Fock levels; increase fock or reduce the drive",
            t.expected_extent, t.reach, t.n_levels
        );
        if r.kind.is_dynamical() {
            diag.warnings.push(msg);
        } else {
            diag.notes.push(msg);
        }
    }
    diag.truncation = Some(t);
    diag
}

#[cfg(test)]
mod tests {
    use super::*;

    fn cfg(kind: ExperimentKind, preset: &str) -> RunConfig {
        RunConfig::new(kind, preset)
    }

    #[test]
    fn desk_small_passes_without_advisory() {
        let d = validate(&cfg(ExperimentKind::QsdEnsemble, "desk-small"));
        assert!(d.is_valid(), "{:?}", d.errors);
        assert!(d.warnings.is_empty(), "{:?}", d.warnings);
        let t = d.truncation.unwrap();
        assert_eq!(t.n_levels, 32);
        assert!(!t.advisory);
        assert!(d.adiabaticity.unwrap().adiabatic);
    }

    #[test]
    fn reference_set_gets_advisory_at_32() {
        let mut c = cfg(ExperimentKind::QsdEnsemble, "paper-sec7");
        c.fock = Some(32);
        let d = validate(&c);
        assert!(d.truncation.unwrap().advisory);
        assert!(d.warnings.iter().any(|w| w.contains("Fock levels")));
    }

    #[test]
    fn efficiency_above_one_is_an_error() {
        let mut c = cfg(ExperimentKind::Master, "desk-small");
        let mut over = toml::Table::new();
        over.insert("e_d".into(), 1.5.into());
        c.params = Some(over);
        let d = validate(&c);
        assert!(!d.is_valid());
        assert!(d.errors[0].contains("e_d"));
    }

    #[test]
    fn good_cavity_warns() {
        let mut c = cfg(ExperimentKind::SnrReport, "desk-small");
        let mut over = toml::Table::new();
        over.insert("gamma_c".into(), 0.5.into());
        c.params = Some(over);
        let d = validate(&c);
        assert!(d.is_valid());
        assert!(d
            .warnings
            .iter()
            .any(|w| w.contains("operate in the ``bad cavity'' limit")));
    }

    #[test]
    fn budget_is_enforced() {
        let mut c = cfg(ExperimentKind::QsdEnsemble, "desk-small");
        c.max_cost = Some(1.0);
        assert!(!validate(&c).is_valid());
    }

    #[test]
    fn undamped_growth_is_linear() {
        let mut p = PhysParams::unit_oscillator();
        p.eta = 0.3;
        p.epsilon = 400.0;
        let drive = DriveProfile::reference();
        let a = truncation_estimate(&p, &drive, 32, 40.0);
        let b = truncation_estimate(&p, &drive, 32, 60.0);
        assert!((b.driven_amplitude - 2.0 * a.driven_amplitude).abs() < 1e-12 * b.driven_amplitude);
    }
}
