//! Truncated Hilbert space of a spin-1/2 coupled to a harmonic oscillator.
//!
//! Composite vectors have length `2N` with the spin index slow: entries
//! `0..N` carry the `|v+(0)>` sector and `N..2N` the `|v-(0)>` sector.

use crate::linalg::{self, CMatrix, CVector, C64, I, ONE, ZERO};
use crate::model::PhysParams;
use ndarray::{s, Array1, Array2};
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum HilbertError {
    #[error("Fock truncation must have at least 2 levels, got {0}")]
    TooFewLevels(usize),
    #[error("dimension mismatch: expected {expected}, got {got}")]
    Dimension { expected: usize, got: usize },
    #[error("operator flagged Hermitian deviates from its adjoint by {0:.3e}")]
    NotHermitian(f64),
    #[error("non-positive oscillator scale: {0}")]
    NonPositiveScale(&'static str),
    #[error(
        "coherent state alpha={alpha} loses weight {weight:.3e} at N={n}; need N >= {required}"
    )]
    Truncation {
        alpha: C64,
        n: usize,
        weight: f64,
        required: usize,
    },
    #[error("state has zero norm")]
    ZeroNorm,
}

pub const HERMITIAN_TOL: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct FockBasis {
    n_levels: usize,
}

impl FockBasis {
    pub fn new(n_levels: usize) -> Result<Self, HilbertError> {
        if n_levels < 2 {
            return Err(HilbertError::TooFewLevels(n_levels));
        }
        Ok(Self { n_levels })
    }

    pub fn n_levels(&self) -> usize {
        self.n_levels
    }

    /// Composite dimension `2N`.
    pub fn composite_dim(&self) -> usize {
        2 * self.n_levels
    }
}

/// A complex operator matrix with an optional Hermiticity flag.
#[derive(Debug, Clone, PartialEq)]
pub struct Operator {
    pub matrix: CMatrix,
    pub hermitian: bool,
}

impl Operator {
    /// Wrap `matrix`; a Hermitian flag is verified against `HERMITIAN_TOL`.
    pub fn new(matrix: CMatrix, hermitian: bool) -> Result<Self, HilbertError> {
        if hermitian {
            let defect = linalg::hermitian_defect(&matrix);
            if defect > HERMITIAN_TOL {
                return Err(HilbertError::NotHermitian(defect));
            }
        }
        Ok(Self { matrix, hermitian })
    }

    pub(crate) fn hermitian_unchecked(matrix: CMatrix) -> Self {
        Self {
            matrix,
            hermitian: true,
        }
    }

    pub(crate) fn general(matrix: CMatrix) -> Self {
        Self {
            matrix,
            hermitian: false,
        }
    }

    pub fn dim(&self) -> usize {
        self.matrix.nrows()
    }

    pub fn identity(n: usize) -> Self {
        Self::hermitian_unchecked(linalg::identity(n))
    }

    pub fn adjoint(&self) -> Self {
        Self {
            matrix: linalg::adjoint(&self.matrix),
            hermitian: self.hermitian,
        }
    }

    pub fn scaled(&self, c: f64) -> Self {
        Self {
            matrix: self.matrix.mapv(|z| z * c),
            hermitian: self.hermitian,
        }
    }

    pub fn dot(&self, other: &Operator) -> Operator {
        Operator::general(self.matrix.dot(&other.matrix))
    }
}

/// Lowering and raising operators `(a, a†)`.
pub fn ladder_ops(basis: &FockBasis) -> (Operator, Operator) {
    let n = basis.n_levels();
    let mut a = Array2::zeros((n, n));
    for i in 0..n - 1 {
        a[[i, i + 1]] = C64::new(((i + 1) as f64).sqrt(), 0.0);
    }
    let a = Operator::general(a);
    let ad = a.adjoint();
    (a, ad)
}

/// Number operator `a†a`, diagonal `0..N`.
pub fn number_op(basis: &FockBasis) -> Operator {
    let n = basis.n_levels();
    Operator::hermitian_unchecked(Array2::from_diag(&Array1::from_shape_fn(n, |i| {
        C64::new(i as f64, 0.0)
    })))
}

/// Position and momentum `(Z, p)` on the oscillator space.
pub fn position_momentum_ops(
    basis: &FockBasis,
    params: &PhysParams,
) -> Result<(Operator, Operator), HilbertError> {
    if !(params.m > 0.0) {
        return Err(HilbertError::NonPositiveScale("m"));
    }
    if !(params.omega_m > 0.0) {
        return Err(HilbertError::NonPositiveScale("omega_m"));
    }
    if !(params.hbar > 0.0) {
        return Err(HilbertError::NonPositiveScale("hbar"));
    }
    let (a, ad) = ladder_ops(basis);
    let zs = (params.hbar / (2.0 * params.m * params.omega_m)).sqrt();
    let ps = (params.hbar * params.m * params.omega_m / 2.0).sqrt();
    let z = (&a.matrix + &ad.matrix).mapv(|v| v * zs);
    let p = (&ad.matrix - &a.matrix).mapv(|v| v * I * ps);
    Ok((
        Operator::hermitian_unchecked(z),
        Operator::hermitian_unchecked(p),
    ))
}

/// Spin operators `(S_x', S_y', S_z')` in the `|v±(0)>` basis.
pub fn spin_ops(hbar: f64) -> (Operator, Operator, Operator) {
    let h = 0.5 * hbar;
    let sx = ndarray::array![[ZERO, ONE * h], [ONE * h, ZERO]];
    let sy = ndarray::array![[ZERO, -I * h], [I * h, ZERO]];
    let sz = ndarray::array![[ONE * h, ZERO], [ZERO, -ONE * h]];
    (
        Operator::hermitian_unchecked(sx),
        Operator::hermitian_unchecked(sy),
        Operator::hermitian_unchecked(sz),
    )
}

/// `spin ⊗ osc` with the spin index slow.
pub fn tensor(spin_part: &Operator, osc_part: &Operator) -> Result<Operator, HilbertError> {
    if spin_part.matrix.nrows() != 2 || spin_part.matrix.ncols() != 2 {
        return Err(HilbertError::Dimension {
            expected: 2,
            got: spin_part.matrix.nrows(),
        });
    }
    if osc_part.matrix.nrows() != osc_part.matrix.ncols() {
        return Err(HilbertError::Dimension {
            expected: osc_part.matrix.nrows(),
            got: osc_part.matrix.ncols(),
        });
    }
    Ok(Operator {
        matrix: linalg::kron(&spin_part.matrix, &osc_part.matrix),
        hermitian: spin_part.hermitian && osc_part.hermitian,
    })
}

/// Pure state on `spin ⊗ oscillator`.
#[derive(Debug, Clone, PartialEq)]
pub struct CompositeState {
    amplitudes: CVector,
    n_levels: usize,
}

impl CompositeState {
    /// Normalizes `amplitudes` (length `2N`).
    pub fn new(amplitudes: CVector, basis: &FockBasis) -> Result<Self, HilbertError> {
        if amplitudes.len() != basis.composite_dim() {
            return Err(HilbertError::Dimension {
                expected: basis.composite_dim(),
                got: amplitudes.len(),
            });
        }
        let mut s = Self {
            amplitudes,
            n_levels: basis.n_levels(),
        };
        s.normalize()?;
        Ok(s)
    }

    /// Product state `(a|v+> + b|v->) ⊗ |osc>`.
    pub fn product(spin: [C64; 2], osc: &CVector, basis: &FockBasis) -> Result<Self, HilbertError> {
        let n = basis.n_levels();
        if osc.len() != n {
            return Err(HilbertError::Dimension {
                expected: n,
                got: osc.len(),
            });
        }
        let mut amps = Array1::zeros(2 * n);
        amps.slice_mut(s![..n]).assign(&osc.mapv(|z| z * spin[0]));
        amps.slice_mut(s![n..]).assign(&osc.mapv(|z| z * spin[1]));
        Self::new(amps, basis)
    }

    pub fn amplitudes(&self) -> &CVector {
        &self.amplitudes
    }

    pub fn n_levels(&self) -> usize {
        self.n_levels
    }

    pub fn norm(&self) -> f64 {
        linalg::norm_sqr(self.amplitudes.as_slice().unwrap()).sqrt()
    }

    pub fn normalize(&mut self) -> Result<f64, HilbertError> {
        let nrm = self.norm();
        if !(nrm > 0.0) || !nrm.is_finite() {
            return Err(HilbertError::ZeroNorm);
        }
        self.amplitudes.mapv_inplace(|z| z / nrm);
        Ok(nrm)
    }

    pub fn to_density(&self) -> DensityOperator {
        let v = &self.amplitudes;
        let d = v.len();
        let m = Array2::from_shape_fn((d, d), |(i, j)| v[i] * v[j].conj());
        DensityOperator {
            matrix: m,
            n_levels: self.n_levels,
        }
    }

    /// Probability of the top Fock level summed over spin.
    pub fn top_level_population(&self) -> f64 {
        let n = self.n_levels;
        self.amplitudes[n - 1].norm_sqr() + self.amplitudes[2 * n - 1].norm_sqr()
    }
}

/// `⟨ψ|A|ψ⟩`.
pub fn expectation(state: &CompositeState, op: &Operator) -> Result<C64, HilbertError> {
    let d = state.amplitudes.len();
    if op.dim() != d {
        return Err(HilbertError::Dimension {
            expected: d,
            got: op.dim(),
        });
    }
    let av = op.matrix.dot(&state.amplitudes);
    Ok(linalg::inner(
        state.amplitudes.as_slice().unwrap(),
        av.as_slice().unwrap(),
    ))
}

/// Density operator on `spin ⊗ oscillator`.
#[derive(Debug, Clone, PartialEq)]
pub struct DensityOperator {
    pub matrix: CMatrix,
    n_levels: usize,
}

impl DensityOperator {
    pub fn new(matrix: CMatrix, basis: &FockBasis) -> Result<Self, HilbertError> {
        let d = basis.composite_dim();
        if matrix.nrows() != d || matrix.ncols() != d {
            return Err(HilbertError::Dimension {
                expected: d,
                got: matrix.nrows(),
            });
        }
        Ok(Self {
            matrix,
            n_levels: basis.n_levels(),
        })
    }

    pub fn n_levels(&self) -> usize {
        self.n_levels
    }

    pub fn trace(&self) -> f64 {
        linalg::trace(&self.matrix).re
    }

    pub fn expectation(&self, op: &Operator) -> Result<C64, HilbertError> {
        let d = self.matrix.nrows();
        if op.dim() != d {
            return Err(HilbertError::Dimension {
                expected: d,
                got: op.dim(),
            });
        }
        // tr(ρA) without forming the product
        let mut acc = ZERO;
        for i in 0..d {
            for j in 0..d {
                acc += self.matrix[[i, j]] * op.matrix[[j, i]];
            }
        }
        Ok(acc)
    }

    pub fn min_eigenvalue(&self) -> f64 {
        linalg::hermitian_eigenvalues(&self.matrix)[0]
    }

    /// Reduced spin state (trace over the oscillator).
    pub fn trace_oscillator(&self) -> CMatrix {
        let n = self.n_levels;
        Array2::from_shape_fn((2, 2), |(a, b)| {
            (0..n).map(|k| self.matrix[[a * n + k, b * n + k]]).sum()
        })
    }

    /// Reduced oscillator state (trace over the spin).
    pub fn trace_spin(&self) -> CMatrix {
        let n = self.n_levels;
        let m = &self.matrix;
        &m.slice(s![..n, ..n]) + &m.slice(s![n.., n..])
    }

    pub fn top_level_population(&self) -> f64 {
        let n = self.n_levels;
        self.matrix[[n - 1, n - 1]].re + self.matrix[[2 * n - 1, 2 * n - 1]].re
    }
}

/// `Σ_{n ≥ N} Poisson(|α|²)`: the weight a coherent state loses at truncation `N`.
pub fn coherent_truncation_weight(alpha: C64, n: usize) -> f64 {
    let mean = alpha.norm_sqr();
    let mut term = (-mean).exp();
    let mut kept = 0.0;
    for k in 0..n {
        if k > 0 {
            term *= mean / k as f64;
        }
        kept += term;
    }
    (1.0 - kept).max(0.0)
}

pub const COHERENT_TRUNCATION_TOL: f64 = 1e-8;

/// Coherent oscillator state `|α>`, renormalized after truncation.
pub fn coherent_state(alpha: C64, basis: &FockBasis) -> Result<CVector, HilbertError> {
    let n = basis.n_levels();
    let weight = coherent_truncation_weight(alpha, n);
    if weight > COHERENT_TRUNCATION_TOL {
        let mut required = n;
        while coherent_truncation_weight(alpha, required) > COHERENT_TRUNCATION_TOL {
            required += 1;
        }
        return Err(HilbertError::Truncation {
            alpha,
            n,
            weight,
            required,
        });
    }
    let mut c = Array1::zeros(n);
    c[0] = C64::new((-alpha.norm_sqr() / 2.0).exp(), 0.0);
    for k in 1..n {
        c[k] = c[k - 1] * alpha / (k as f64).sqrt();
    }
    let nrm = linalg::norm_sqr(c.as_slice().unwrap()).sqrt();
    Ok(c.mapv(|z: C64| z / nrm))
}

pub fn fock_state(k: usize, basis: &FockBasis) -> Result<CVector, HilbertError> {
    let n = basis.n_levels();
    if k >= n {
        return Err(HilbertError::Dimension {
            expected: n,
            got: k + 1,
        });
    }
    let mut v = Array1::zeros(n);
    v[k] = ONE;
    Ok(v)
}

/// Gibbs populations of the oscillator at temperature `kT`, renormalized on the
/// truncated ladder.
pub fn thermal_populations(params: &PhysParams, basis: &FockBasis) -> Vec<f64> {
    let x = params.hbar * params.omega_m / params.kT;
    let w: Vec<f64> = (0..basis.n_levels())
        .map(|k| (-x * k as f64).exp())
        .collect();
    let z: f64 = w.iter().sum();
    w.into_iter().map(|v| v / z).collect()
}

/// Harmonic-oscillator eigenfunctions `ψ_n(z)`, `n < N`, at one position.
pub fn hermite_functions(z: f64, n: usize, params: &PhysParams) -> Vec<f64> {
    let x0 = (params.hbar / (params.m * params.omega_m)).sqrt();
    let x = z / x0;
    let mut out = vec![0.0; n];
    out[0] = std::f64::consts::PI.powf(-0.25) * (-0.5 * x * x).exp();
    if n > 1 {
        out[1] = std::f64::consts::SQRT_2 * x * out[0];
    }
    for k in 1..n.saturating_sub(1) {
        let kf = k as f64;
        out[k + 1] = (2.0 / (kf + 1.0)).sqrt() * x * out[k] - (kf / (kf + 1.0)).sqrt() * out[k - 1];
    }
    let norm = x0.sqrt();
    out.iter_mut().for_each(|v| *v /= norm);
    out
}

/// Position density `p(z)` of a composite density operator (spin traced out).
pub fn position_density(rho: &DensityOperator, z_grid: &[f64], params: &PhysParams) -> Vec<f64> {
    let osc = rho.trace_spin();
    let n = rho.n_levels();
    z_grid
        .iter()
        .map(|&z| {
            let h = hermite_functions(z, n, params);
            let mut acc = 0.0;
            for i in 0..n {
                for j in 0..n {
                    acc += osc[[i, j]].re * h[i] * h[j];
                }
            }
            acc.max(0.0)
        })
        .collect()
}

/// Position density of a pure composite state.
pub fn position_density_pure(
    state: &CompositeState,
    z_grid: &[f64],
    params: &PhysParams,
) -> Vec<f64> {
    let n = state.n_levels();
    let amps = state.amplitudes();
    z_grid
        .iter()
        .map(|&z| {
            let h = hermite_functions(z, n, params);
            (0..2)
                .map(|s| {
                    let psi: C64 = (0..n).map(|k| amps[s * n + k] * h[k]).sum();
                    psi.norm_sqr()
                })
                .sum()
        })
        .collect()
}
