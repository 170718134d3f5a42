use super::{DriveProfile, ModelError, PhysParams};
use num_complex::Complex64 as C64;
use serde::{Deserialize, Serialize};

/// `(λ, Θ)` with λ = √(f² + ε²) and Θ = atan2(ε, −f) ∈ (0, π).
pub fn lambda_theta(
    params: &PhysParams,
    profile: &DriveProfile,
    t: f64,
) -> Result<(f64, f64), ModelError> {
    let f = profile.f(t)?;
    Ok(lambda_theta_at(params.epsilon, f))
}

pub fn lambda_theta_at(epsilon: f64, f: f64) -> (f64, f64) {
    (f.hypot(epsilon), epsilon.atan2(-f))
}

pub const PHASE_REL_TOL: f64 = 1e-8;
const KNOT_SPACING: f64 = 0.5;
const MAX_DEPTH: u32 = 48;

/// Instantaneous spin frame with the accumulated phase Φ(t) = (1/ħ)∫₀ᵗ λ dt′
/// cached at knots.
#[derive(Debug, Clone)]
pub struct AdiabaticFrame {
    params: PhysParams,
    profile: DriveProfile,
    knots: Vec<f64>,
    phi_at_knots: Vec<f64>,
}

impl AdiabaticFrame {
    /// Build the cache on `[0, t_end]`.
    pub fn new(
        params: &PhysParams,
        profile: &DriveProfile,
        t_end: f64,
    ) -> Result<Self, ModelError> {
        profile.validate()?;
        let t_end = t_end.max(0.0).min(profile.t_max());
        let mut knots: Vec<f64> = (0..)
            .map(|k| k as f64 * KNOT_SPACING)
            .take_while(|&t| t < t_end)
            .chain(
                profile
                    .breakpoints()
                    .into_iter()
                    .filter(|&b| b > 0.0 && b < t_end),
            )
            .chain(std::iter::once(t_end))
            .collect();
        knots.sort_by(|a, b| a.partial_cmp(b).unwrap());
        knots.dedup_by(|a, b| (*a - *b).abs() < 1e-12);
        let mut frame = Self {
            params: params.clone(),
            profile: profile.clone(),
            knots,
            phi_at_knots: vec![0.0],
        };
        for k in 1..frame.knots.len() {
            let seg = frame.integrate(frame.knots[k - 1], frame.knots[k])?;
            let prev = frame.phi_at_knots[k - 1];
            frame.phi_at_knots.push(prev + seg);
        }
        Ok(frame)
    }

    pub fn lambda(&self, t: f64) -> Result<f64, ModelError> {
        Ok(lambda_theta(&self.params, &self.profile, t)?.0)
    }

    pub fn theta(&self, t: f64) -> Result<f64, ModelError> {
        Ok(lambda_theta(&self.params, &self.profile, t)?.1)
    }

    /// Φ(t).
    pub fn accumulated_phase(&self, t: f64) -> Result<f64, ModelError> {
        if t < 0.0 {
            return Err(ModelError::OutOfRange {
                t,
                lo: 0.0,
                hi: f64::INFINITY,
            });
        }
        let k = self.knots.partition_point(|&x| x <= t).saturating_sub(1);
        let base = self.phi_at_knots[k];
        if t == self.knots[k] {
            return Ok(base);
        }
        Ok(base + self.integrate(self.knots[k], t)?)
    }

    fn integrate(&self, a: f64, b: f64) -> Result<f64, ModelError> {
        let hbar = self.params.hbar;
        let eps = self.params.epsilon;
        let mut err = None;
        let mut g = |t: f64| match self.profile.f(t) {
            Ok(f) => f.hypot(eps) / hbar,
            Err(e) => {
                err.get_or_insert(e);
                0.0
            }
        };
        let v = adaptive_simpson(&mut g, a, b, PHASE_REL_TOL * 1e-2);
        if let Some(e) = err {
            return Err(e);
        }
        v.ok_or(ModelError::Quadrature { a, b })
    }
}

/// Adaptive Simpson quadrature with a relative tolerance; `None` when the
/// recursion limit is hit before convergence.
pub fn adaptive_simpson<F: FnMut(f64) -> f64>(
    f: &mut F,
    a: f64,
    b: f64,
    rel_tol: f64,
) -> Option<f64> {
    if a == b {
        return Some(0.0);
    }
    let fa = f(a);
    let fb = f(b);
    let m = 0.5 * (a + b);
    let fm = f(m);
    let whole = (b - a) / 6.0 * (fa + 4.0 * fm + fb);
    let scale = whole.abs().max(f64::MIN_POSITIVE);
    simpson_rec(f, a, b, fa, fm, fb, whole, rel_tol * scale, MAX_DEPTH)
}

#[allow(clippy::too_many_arguments)]
fn simpson_rec<F: FnMut(f64) -> f64>(
    f: &mut F,
    a: f64,
    b: f64,
    fa: f64,
    fm: f64,
    fb: f64,
    whole: f64,
    tol: f64,
    depth: u32,
) -> Option<f64> {
    let m = 0.5 * (a + b);
    let lm = 0.5 * (a + m);
    let rm = 0.5 * (m + b);
    let flm = f(lm);
    let frm = f(rm);
    let left = (m - a) / 6.0 * (fa + 4.0 * flm + fm);
    let right = (b - m) / 6.0 * (fm + 4.0 * frm + fb);
    let delta = left + right - whole;
    if delta.abs() <= 15.0 * tol {
        return Some(left + right + delta / 15.0);
    }
    if depth == 0 {
        return None;
    }
    Some(
        simpson_rec(f, a, m, fa, flm, fm, left, 0.5 * tol, depth - 1)?
            + simpson_rec(f, m, b, fm, frm, fb, right, 0.5 * tol, depth - 1)?,
    )
}

/// Rotate lab amplitudes `(a, b)` on `|↑>, |↓>` into the `|v±(0)>` basis.
pub fn spin_decomposition(a: C64, b: C64, theta0: f64) -> Result<(C64, C64), ModelError> {
    let norm = a.norm_sqr() + b.norm_sqr();
    if (norm - 1.0).abs() > 1e-9 {
        return Err(ModelError::Unnormalized(norm));
    }
    let (s, c) = (0.5 * theta0).sin_cos();
    Ok((a * c + b * s, -a * s + b * c))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AdiabaticityReport {
    /// max over the grid of |ε f′/λ²|·ħ/λ.
    pub max_ratio: f64,
    pub t_at_max: f64,
    pub min_lambda: f64,
    pub threshold: f64,
    pub adiabatic: bool,
}

pub const ADIABATIC_THRESHOLD: f64 = 1e-2;

/// Non-adiabatic coupling relative to the level splitting over `[t0, t1]`.
pub fn adiabaticity_report(
    params: &PhysParams,
    profile: &DriveProfile,
    t0: f64,
    t1: f64,
    threshold: f64,
) -> Result<AdiabaticityReport, ModelError> {
    let n = 20_000usize;
    let mut grid: Vec<f64> = (0..=n)
        .map(|k| t0 + (t1 - t0) * k as f64 / n as f64)
        .collect();
    // zero crossings of the sine, where λ is smallest and |f′| largest
    if let DriveProfile::PaperRampSine {
        t_switch, omega, ..
    } = profile
    {
        let mut t = *t_switch;
        while t <= t1 {
            if t >= t0 {
                grid.push(t);
                grid.push(t + 1e-12);
            }
            t += std::f64::consts::PI / omega;
        }
    }
    let eps = params.epsilon;
    let mut report = AdiabaticityReport {
        max_ratio: 0.0,
        t_at_max: t0,
        min_lambda: f64::INFINITY,
        threshold,
        adiabatic: true,
    };
    for t in grid {
        if t < t0 || t > t1 {
            continue;
        }
        let f = profile.f(t)?;
        let fp = profile.derivative(t)?;
        let lambda = f.hypot(eps);
        let r = (eps * fp / (lambda * lambda)).abs() * params.hbar / lambda;
        report.min_lambda = report.min_lambda.min(lambda);
        if r > report.max_ratio {
            report.max_ratio = r;
            report.t_at_max = t;
        }
    }
    report.adiabatic = report.max_ratio <= threshold;
    Ok(report)
}
