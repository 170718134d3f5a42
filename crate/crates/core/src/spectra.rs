//! Linear-response analytics: output noise spectrum, mean signal, SNR and
//! minimum detectable force.

use crate::linalg::C64;
use crate::model::{lambda_theta_at, DriveProfile, ModelError, PhysParams, RegimeFlags};
use serde::{Deserialize, Serialize};
use std::f64::consts::PI;
use thiserror::Error;

/// Quadrature points per period for Fourier coefficients; the integrand is
/// smooth and periodic, so the trapezoid rule converges geometrically.
const FOURIER_POINTS: usize = 8192;

#[derive(Debug, Error)]
pub enum SpectraError {
    #[error("frequency grid must be strictly positive, found {0}")]
    NonPositiveFrequency(f64),
    #[error("drive is not periodic at {0}")]
    NonPeriodic(String),
    #[error("bandwidth must be positive, got {0}")]
    Bandwidth(f64),
    #[error(transparent)]
    Model(#[from] ModelError),
}

/// `D(ω) = (iω − γ_c/2)(ω_m² − ω² − iωΓ/m)`.
pub fn response_d(params: &PhysParams, omega: f64) -> C64 {
    let a = C64::new(-0.5 * params.gamma_c, omega);
    let b = C64::new(
        params.omega_m.powi(2) - omega * omega,
        -omega * params.big_gamma() / params.m,
    );
    a * b
}

/// `|D(ω_m)| = [(γ_c/2)² + ω_m²]^{1/2} ω_m²/Q`.
pub fn response_d_resonance(params: &PhysParams) -> f64 {
    (0.25 * params.gamma_c.powi(2) + params.omega_m.powi(2)).sqrt() * params.omega_m.powi(2)
        / params.q_factor()
}

/// `ħω coth(ħω/2kT)`.
pub fn thermal_factor(hbar: f64, omega: f64, kt: f64) -> f64 {
    hbar * omega / (hbar * omega / (2.0 * kt)).tanh()
}

/// High-temperature expansion `2kT + ħ²ω²/(6kT)`.
pub fn thermal_factor_high_t(hbar: f64, omega: f64, kt: f64) -> f64 {
    2.0 * kt + (hbar * omega).powi(2) / (6.0 * kt)
}

/// How the delta-comb Fourier transform of `G(t)` is turned into a number at
/// `ω = kω_m`, given the Fourier-series coefficient `c_k`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DeltaConvention {
    /// Amplitude of the real cosine component, `2|c_k|`.
    #[default]
    RealAmplitude,
    /// `|c_k|`.
    Coefficient,
    /// Delta-function weight, `2π|c_k|`.
    DeltaWeight,
}

impl DeltaConvention {
    pub fn factor(&self) -> f64 {
        match self {
            DeltaConvention::RealAmplitude => 2.0,
            DeltaConvention::Coefficient => 1.0,
            DeltaConvention::DeltaWeight => 2.0 * PI,
        }
    }

    pub fn describe(&self) -> &'static str {
        match self {
            DeltaConvention::RealAmplitude => "|G(k w_m)| = 2|c_k| (real cosine amplitude of G(t))",
            DeltaConvention::Coefficient => {
                "|G(k w_m)| = |c_k| (complex Fourier-series coefficient)"
            }
            DeltaConvention::DeltaWeight => {
                "|G(k w_m)| = 2*pi*|c_k| (integrated delta-function weight)"
            }
        }
    }
}

/// `|c_k|` of `G(t) = 2η f(t)/λ(t)` for `f(t) = A sin(ωt)`, over one period.
pub fn sine_drive_coefficient(eta: f64, epsilon: f64, amplitude: f64, k: usize) -> f64 {
    let m = FOURIER_POINTS;
    let mut acc = C64::new(0.0, 0.0);
    for j in 0..m {
        let phi = 2.0 * PI * j as f64 / m as f64;
        let f = amplitude * phi.sin();
        let (lambda, _) = lambda_theta_at(epsilon, f);
        acc += C64::from_polar(2.0 * eta * f / lambda, -(k as f64) * phi);
    }
    (acc / m as f64).norm()
}

/// Fourier-series coefficient `|c_k|` of `G(t)` at `at_omega = k·ω_mod`
/// over the post-ramp periodic phase of the drive.
pub fn g_fourier(
    params: &PhysParams,
    profile: &DriveProfile,
    at_omega: f64,
) -> Result<f64, SpectraError> {
    match profile {
        DriveProfile::PaperRampSine {
            amplitude, omega, ..
        } => {
            let k = (at_omega / omega).round();
            if k < 1.0 || (k * omega - at_omega).abs() > 1e-9 * at_omega.abs() {
                return Err(SpectraError::NonPeriodic(format!(
                    "{at_omega} is not a harmonic of the modulation frequency {omega}"
                )));
            }
            Ok(sine_drive_coefficient(
                params.eta,
                params.epsilon,
                *amplitude,
                k as usize,
            ))
        }
        DriveProfile::Constant { .. } => Ok(0.0),
        DriveProfile::Table { .. } => Err(SpectraError::NonPeriodic("tabulated drive".into())),
    }
}

/// Components of the output current noise spectrum.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NoiseSpectrum {
    pub omega: Vec<f64>,
    pub shot: Vec<f64>,
    pub backaction: Vec<f64>,
    pub thermal: Vec<f64>,
    pub total: Vec<f64>,
    /// The reservoir is treated in the infinite-cutoff Ohmic limit.
    pub infinite_cutoff: bool,
}

/// `(shot, back-action, thermal)` at one frequency.
pub fn noise_components(params: &PhysParams, omega: f64) -> (f64, f64, f64) {
    let p = params;
    let pre = (p.beta * p.gamma_c).powi(2);
    let a2 = p.alpha0_abs().powi(2);
    let d2 = response_d(p, omega).norm_sqr();
    let cav = 0.25 * p.gamma_c.powi(2) + omega * omega;
    let ba = 4.0 * (p.hbar * p.kappa.powi(2) * p.gamma_c * a2 / p.m).powi(2) / (cav * d2);
    let th = 4.0
        * (p.kappa.powi(2) * p.gamma_c * a2 * p.big_gamma() / p.m.powi(2))
        * thermal_factor(p.hbar, omega, p.kT)
        / d2;
    (pre, pre * ba, pre * th)
}

pub fn noise_spectrum(
    params: &PhysParams,
    omega_grid: &[f64],
) -> Result<NoiseSpectrum, SpectraError> {
    let mut s = NoiseSpectrum {
        omega: omega_grid.to_vec(),
        shot: Vec::new(),
        backaction: Vec::new(),
        thermal: Vec::new(),
        total: Vec::new(),
        infinite_cutoff: true,
    };
    for &w in omega_grid {
        if !(w > 0.0) {
            return Err(SpectraError::NonPositiveFrequency(w));
        }
        let (a, b, c) = noise_components(params, w);
        s.shot.push(a);
        s.backaction.push(b);
        s.thermal.push(c);
        s.total.push(a + b + c);
    }
    Ok(s)
}

/// `|⟨I_out(ω)⟩| = βγ_c (2κ√γ_c|α₀|/m) |G| |⟨S_z'⟩| / |D(ω)|`.
pub fn mean_signal(params: &PhysParams, g_abs: f64, omega: f64, sz: f64) -> f64 {
    let p = params;
    p.beta
        * p.gamma_c
        * (2.0 * p.kappa * p.gamma_c.sqrt() * p.alpha0_abs() / p.m)
        * g_abs
        * sz.abs()
        / response_d(p, omega).norm()
}

/// `|⟨I_out(ω)⟩| / √S_out(ω)` for a force of Fourier magnitude `g_abs`.
pub fn snr(params: &PhysParams, g_abs: f64, omega: f64, sz: f64) -> Result<f64, SpectraError> {
    if !(omega > 0.0) {
        return Err(SpectraError::NonPositiveFrequency(omega));
    }
    let (a, b, c) = noise_components(params, omega);
    Ok(mean_signal(params, g_abs, omega, sz) / (a + b + c).sqrt())
}

/// The three terms of `N(ω_m)` (shot, back-action, thermal).
pub fn n_resonance_terms(params: &PhysParams) -> [f64; 3] {
    let p = params;
    let a2 = p.alpha0_abs().powi(2);
    let cav = 0.25 * p.gamma_c.powi(2) + p.omega_m.powi(2);
    [
        cav / (4.0 * p.kappa.powi(2) * p.gamma_c * a2)
            * (p.m * p.omega_m.powi(2) / p.q_factor()).powi(2),
        (p.hbar * p.kappa).powi(2) * p.gamma_c * a2 / cav,
        p.big_gamma() * thermal_factor(p.hbar, p.omega_m, p.kT),
    ]
}

pub fn n_resonance(params: &PhysParams) -> f64 {
    n_resonance_terms(params).iter().sum()
}

/// Minimum detectable force in bandwidth `Δν`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ForceLimit {
    pub bandwidth: f64,
    /// `√(2k kT Δν/(Q ω_m))`.
    pub high_t: f64,
    /// `√(N_thermal(ω_m) Δν)` with the exact coth.
    pub exact: f64,
    pub high_temperature_regime: bool,
}

pub fn f_min(params: &PhysParams, bandwidth: f64) -> Result<ForceLimit, SpectraError> {
    if !(bandwidth > 0.0) {
        return Err(SpectraError::Bandwidth(bandwidth));
    }
    let p = params;
    Ok(ForceLimit {
        bandwidth,
        high_t: (2.0 * p.spring_constant() * p.kT * bandwidth / (p.q_factor() * p.omega_m)).sqrt(),
        exact: (n_resonance_terms(p)[2] * bandwidth).sqrt(),
        high_temperature_regime: p.regime_flags().high_temperature,
    })
}

/// SNR under one delta convention.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConventionValue {
    pub convention: DeltaConvention,
    pub description: String,
    pub snr: f64,
    pub snr_physical: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SnrReport {
    pub convention: DeltaConvention,
    pub convention_description: String,
    /// `|c₁|` of `G(t)` and the resulting `|G(ω_m)|`.
    pub c1_abs: f64,
    pub g_abs: f64,
    pub sz: f64,
    pub n_resonance: f64,
    pub n_terms: [f64; 3],
    /// Simulation units (per root simulation time unit).
    pub snr_at_resonance: f64,
    /// Per root second: `snr_at_resonance / √time_unit_seconds`.
    pub snr_at_resonance_physical: f64,
    pub unit_conversion: f64,
    pub alternatives: Vec<ConventionValue>,
    /// SNR(ω) with the force amplitude held at `g_abs`.
    pub omega_grid: Vec<f64>,
    pub snr_of_omega: Vec<f64>,
    pub f_min: Vec<ForceLimit>,
    pub q_factor: f64,
    pub q_factor_alt: f64,
    pub regime: RegimeFlags,
}

/// `SNR(ω_m) = |G(ω_m)| |⟨S_z'⟩| / √N(ω_m)` with `⟨S_z'⟩ = 1/2`.
pub fn snr_at_resonance(
    params: &PhysParams,
    profile: &DriveProfile,
    convention: DeltaConvention,
    omega_grid: &[f64],
    bandwidths: &[f64],
) -> Result<SnrReport, SpectraError> {
    params.validate()?;
    let sz = 0.5 * params.hbar;
    let c1 = g_fourier(params, profile, params.omega_m)?;
    let n_terms = n_resonance_terms(params);
    let n = n_terms.iter().sum::<f64>();
    let unit = 1.0 / params.time_unit_seconds.sqrt();
    let value = |c: DeltaConvention| c.factor() * c1 * sz / n.sqrt();
    let g_abs = convention.factor() * c1;
    let snr0 = value(convention);
    let alternatives = [
        DeltaConvention::RealAmplitude,
        DeltaConvention::Coefficient,
        DeltaConvention::DeltaWeight,
    ]
    .into_iter()
    .map(|c| ConventionValue {
        convention: c,
        description: c.describe().to_string(),
        snr: value(c),
        snr_physical: value(c) * unit,
    })
    .collect();
    let snr_of_omega = omega_grid
        .iter()
        .map(|&w| snr(params, g_abs, w, sz))
        .collect::<Result<Vec<_>, _>>()?;
    let f_min = bandwidths
        .iter()
        .map(|&b| f_min(params, b))
        .collect::<Result<Vec<_>, _>>()?;
    let d = params.derived();
    Ok(SnrReport {
        convention,
        convention_description: convention.describe().to_string(),
        c1_abs: c1,
        g_abs,
        sz,
        n_resonance: n,
        n_terms,
        snr_at_resonance: snr0,
        snr_at_resonance_physical: snr0 * unit,
        unit_conversion: unit,
        alternatives,
        omega_grid: omega_grid.to_vec(),
        snr_of_omega,
        f_min,
        q_factor: d.q_factor,
        q_factor_alt: d.q_factor_alt,
        regime: d.regime,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn base() -> PhysParams {
        let mut p = PhysParams::unit_oscillator();
        p.eta = 0.3;
        p.epsilon = 400.0;
        p.gamma_m = 1e-5;
        p.kT = 1e4;
        p.gamma_c = 9.2092e7;
        p.E_drive = 0.73684 * p.gamma_c;
        p.kappa = 237.5 / 0.73684;
        p
    }

    fn drive() -> DriveProfile {
        DriveProfile::reference()
    }

    #[test]
    fn response_limits() {
        let p = base();
        let d0 = response_d(&p, 0.0);
        assert!(
            (d0 - C64::new(-0.5 * p.gamma_c * p.omega_m.powi(2), 0.0)).norm() < 1e-9 * d0.norm()
        );
        let direct = response_d(&p, p.omega_m).norm();
        assert!((direct - response_d_resonance(&p)).abs() < 1e-12 * direct);
        let want =
            (0.25 * p.gamma_c.powi(2) + p.omega_m.powi(2)).sqrt() * p.omega_m * p.big_gamma() / p.m;
        assert!((direct - want).abs() < 1e-12 * want);
        let mut q = p.clone();
        q.gamma_m = 0.0;
        assert_eq!(response_d(&q, q.omega_m).norm(), 0.0);
    }

    #[test]
    fn weak_drive_linearizes() {
        let c = sine_drive_coefficient(0.3, 1e6, 1.0, 1);
        assert!((c - 0.3 / 1e6).abs() < 1e-9 * c);
    }

    #[test]
    fn strong_drive_is_a_square_wave() {
        let eta = 0.3;
        let c = sine_drive_coefficient(eta, 1e-3, 1e6, 1);
        assert!((c - 4.0 * eta / PI).abs() < 1e-4, "{c}");
        // even harmonics vanish by symmetry
        assert!(sine_drive_coefficient(eta, 1e-3, 1e6, 2) < 1e-9);
    }

    #[test]
    fn reference_drive_lies_between_limits() {
        let p = base();
        let c = g_fourier(&p, &drive(), 1.0).unwrap();
        assert!(c > 0.12 && c < 4.0 * 0.3 / PI);
        assert!((c - 0.328942).abs() < 1e-6, "{c}");
        assert!(g_fourier(&p, &drive(), 1.5).is_err());
    }

    #[test]
    fn noise_terms() {
        let p = base();
        let s = noise_spectrum(&p, &[0.5, 1.0, 2.0]).unwrap();
        for k in 0..3 {
            assert_eq!(s.total[k], s.shot[k] + s.backaction[k] + s.thermal[k]);
        }
        assert!(s.thermal[1] > s.shot[1] && s.thermal[1] > s.backaction[1]);
        let mut q = p.clone();
        q.kappa = 0.0;
        let s = noise_spectrum(&q, &[1.0]).unwrap();
        assert_eq!(s.backaction[0], 0.0);
        assert_eq!(s.thermal[0], 0.0);
        assert_eq!(s.total[0], s.shot[0]);
        assert!(noise_spectrum(&p, &[0.0]).is_err());
    }

    #[test]
    fn high_temperature_series() {
        let a = thermal_factor(1.0, 1.0, 1e4);
        let b = thermal_factor_high_t(1.0, 1.0, 1e4);
        assert!((a - b).abs() < 1e-6 * a);
    }

    #[test]
    fn resonance_snr_two_paths_agree() {
        let p = base();
        let g = 2.0 * g_fourier(&p, &drive(), 1.0).unwrap();
        let via_n = g * 0.5 / n_resonance(&p).sqrt();
        let via_spectrum = snr(&p, g, p.omega_m, 0.5).unwrap();
        assert!((via_n - via_spectrum).abs() < 1e-9 * via_n);
    }

    #[test]
    fn resonance_enhancement() {
        let p = base();
        let g = 1.0;
        let ratio = mean_signal(&p, g, p.omega_m, 0.5) / mean_signal(&p, g, 0.0, 0.5);
        let want =
            p.q_factor() * 0.5 * p.gamma_c / (0.25 * p.gamma_c.powi(2) + p.omega_m.powi(2)).sqrt();
        assert!((ratio - want).abs() < 1e-9 * want);
        assert_eq!(mean_signal(&p, g, 1.0, -0.5), mean_signal(&p, g, 1.0, 0.5));
        let mut q = p.clone();
        q.eta = 0.0;
        assert_eq!(g_fourier(&q, &drive(), 1.0).unwrap(), 0.0);
    }

    #[test]
    fn force_limit_hand_value() {
        let mut p = PhysParams::unit_oscillator();
        p.kT = 1e4;
        p.gamma_m = 5e-6; // Q = mω_m/Γ = 1e5
        let f = f_min(&p, 1.0).unwrap();
        assert!((f.high_t - 0.2f64.sqrt()).abs() < 1e-12);
        assert!((f.exact - f.high_t).abs() < 1e-4 * f.high_t);
        assert!(f.high_temperature_regime);
        let mut hot = p.clone();
        hot.kT *= 4.0;
        assert!((f_min(&hot, 1.0).unwrap().high_t - 2.0 * f.high_t).abs() < 1e-12);
    }

    #[test]
    fn snr_scales_with_coupling() {
        let p = base();
        let a = snr_at_resonance(&p, &drive(), DeltaConvention::RealAmplitude, &[], &[]).unwrap();
        let mut q = p.clone();
        q.eta *= 2.0;
        let b = snr_at_resonance(&q, &drive(), DeltaConvention::RealAmplitude, &[], &[]).unwrap();
        assert!((b.snr_at_resonance - 2.0 * a.snr_at_resonance).abs() < 1e-9 * b.snr_at_resonance);
    }

    proptest! {
        #[test]
        fn snr_does_not_depend_on_beta(beta in 0.1f64..10.0, w in 0.2f64..5.0) {
            let mut p = base();
            let a = snr(&p, 0.7, w, 0.5).unwrap();
            p.beta = beta;
            let b = snr(&p, 0.7, w, 0.5).unwrap();
            prop_assert!((a - b).abs() < 1e-12 * a);
        }

        #[test]
        fn components_are_nonnegative(w in 1e-3f64..1e3, kappa in 0.0f64..1e3) {
            let mut p = base();
            p.kappa = kappa;
            let (a, b, c) = noise_components(&p, w);
            prop_assert!(a >= 0.0 && b >= 0.0 && c >= 0.0);
            prop_assert!(a + b + c >= a);
        }

        #[test]
        fn high_temperature_thermal_term(x in 1e-6f64..0.01, kt in 1.0f64..1e6) {
            let omega = 2.0 * kt * x;
            let a = thermal_factor(1.0, omega, kt);
            let b = thermal_factor_high_t(1.0, omega, kt);
            prop_assert!((a - b).abs() < 1e-4 * a);
        }
    }
}
