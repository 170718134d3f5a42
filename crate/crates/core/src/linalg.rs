//! Dense complex linear algebra used throughout the crate.
//!
//! Matrices are row-major `ndarray` arrays of `Complex64`. Matrix products go
//! through `ndarray::dot` (backed by `matrixmultiply`'s complex gemm);
//! matrix-vector products use a hand-written row kernel because they dominate
//! the trajectory integrators.

use nalgebra::DMatrix;
use ndarray::{s, Array1, Array2, ArrayView2, ArrayViewMut2};
use num_complex::Complex64;

pub type C64 = Complex64;
pub type CMatrix = Array2<C64>;
pub type CVector = Array1<C64>;

pub const ZERO: C64 = C64::new(0.0, 0.0);
pub const ONE: C64 = C64::new(1.0, 0.0);
pub const I: C64 = C64::new(0.0, 1.0);

pub fn identity(n: usize) -> CMatrix {
    Array2::from_diag_elem(n, ONE)
}

/// Kronecker product `a ⊗ b`; the index of `a` is the slow one.
pub fn kron(a: &CMatrix, b: &CMatrix) -> CMatrix {
    let (ar, ac) = a.dim();
    let (br, bc) = b.dim();
    let mut out = Array2::zeros((ar * br, ac * bc));
    for i in 0..ar {
        for j in 0..ac {
            let aij = a[[i, j]];
            if aij == ZERO {
                continue;
            }
            let mut block = out.slice_mut(s![i * br..(i + 1) * br, j * bc..(j + 1) * bc]);
            block.zip_mut_with(b, |o, &bv| *o = aij * bv);
        }
    }
    out
}

pub fn adjoint(m: &CMatrix) -> CMatrix {
    m.t().mapv(|z| z.conj())
}

/// Largest entrywise deviation of `m` from its conjugate transpose.
pub fn hermitian_defect(m: &CMatrix) -> f64 {
    let n = m.nrows();
    let mut worst = 0.0f64;
    for i in 0..n {
        for j in i..n {
            worst = worst.max((m[[i, j]] - m[[j, i]].conj()).norm());
        }
    }
    worst
}

/// Replace `m` by `(m + m†)/2`.
pub fn symmetrize(m: &mut CMatrix) {
    let n = m.nrows();
    for i in 0..n {
        m[[i, i]] = C64::new(m[[i, i]].re, 0.0);
        for j in (i + 1)..n {
            let avg = (m[[i, j]] + m[[j, i]].conj()) * 0.5;
            m[[i, j]] = avg;
            m[[j, i]] = avg.conj();
        }
    }
}

pub fn max_abs(m: &CMatrix) -> f64 {
    m.iter().fold(0.0f64, |acc, z| acc.max(z.norm()))
}

pub fn trace(m: &CMatrix) -> C64 {
    m.diag().sum()
}

/// Maximum absolute row sum, an upper bound on the spectral radius.
pub fn inf_norm(m: &CMatrix) -> f64 {
    m.rows()
        .into_iter()
        .map(|row| row.iter().map(|z| z.norm()).sum::<f64>())
        .fold(0.0, f64::max)
}

fn to_nalgebra(m: &CMatrix) -> DMatrix<C64> {
    let (r, c) = m.dim();
    DMatrix::from_fn(r, c, |i, j| m[[i, j]])
}

/// Eigenvalues of a Hermitian matrix, ascending.
pub fn hermitian_eigenvalues(m: &CMatrix) -> Vec<f64> {
    let mut h = to_nalgebra(m);
    // enforce exact Hermiticity so the symmetric solver sees a clean input
    let n = h.nrows();
    for i in 0..n {
        h[(i, i)] = C64::new(h[(i, i)].re, 0.0);
        for j in (i + 1)..n {
            let avg = (h[(i, j)] + h[(j, i)].conj()) * 0.5;
            h[(i, j)] = avg;
            h[(j, i)] = avg.conj();
        }
    }
    let mut ev: Vec<f64> = h.symmetric_eigenvalues().iter().copied().collect();
    ev.sort_by(|a, b| a.partial_cmp(b).unwrap());
    ev
}

/// Eigen-decomposition of a Hermitian matrix: ascending eigenvalues and the
/// matching orthonormal eigenvectors as columns.
pub fn hermitian_eigh(m: &CMatrix) -> (Vec<f64>, CMatrix) {
    let eig = to_nalgebra(m).symmetric_eigen();
    let n = m.nrows();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[a].partial_cmp(&eig.eigenvalues[b]).unwrap());
    let values = order.iter().map(|&k| eig.eigenvalues[k]).collect();
    let vectors = Array2::from_shape_fn((n, n), |(i, j)| eig.eigenvectors[(i, order[j])]);
    (values, vectors)
}

/// `½‖a − b‖₁` for Hermitian `a`, `b`.
pub fn trace_distance(a: &CMatrix, b: &CMatrix) -> f64 {
    let diff = a - b;
    0.5 * hermitian_eigenvalues(&diff)
        .iter()
        .map(|v| v.abs())
        .sum::<f64>()
}

pub fn commutator(a: &CMatrix, b: &CMatrix) -> CMatrix {
    a.dot(b) - b.dot(a)
}

pub fn anticommutator(a: &CMatrix, b: &CMatrix) -> CMatrix {
    a.dot(b) + b.dot(a)
}

/// `y = A x` for a square row-major matrix.
#[inline]
pub fn matvec_into(a: &[C64], n: usize, x: &[C64], y: &mut [C64]) {
    debug_assert_eq!(a.len(), n * n);
    debug_assert!(x.len() >= n && y.len() >= n);
    for (i, yi) in y.iter_mut().take(n).enumerate() {
        let row = &a[i * n..(i + 1) * n];
        let mut re = 0.0;
        let mut im = 0.0;
        for (aij, xj) in row.iter().zip(x) {
            re += aij.re * xj.re - aij.im * xj.im;
            im += aij.re * xj.im + aij.im * xj.re;
        }
        *yi = C64::new(re, im);
    }
}

/// `⟨x|y⟩`.
#[inline]
pub fn inner(x: &[C64], y: &[C64]) -> C64 {
    let mut re = 0.0;
    let mut im = 0.0;
    for (a, b) in x.iter().zip(y) {
        re += a.re * b.re + a.im * b.im;
        im += a.re * b.im - a.im * b.re;
    }
    C64::new(re, im)
}

#[inline]
pub fn norm_sqr(x: &[C64]) -> f64 {
    x.iter().map(|z| z.norm_sqr()).sum()
}

/// An operator on the composite `spin ⊗ oscillator` space, stored either
/// densely or as two oscillator blocks when it does not couple the spin
/// sectors (every operator of the rotating-wave model has that form).
#[derive(Clone, Debug)]
pub enum StructuredOp {
    Dense(CMatrix),
    SpinBlocks { n: usize, blocks: [CMatrix; 2] },
}

impl StructuredOp {
    /// Inspect `m` (dimension `2n`) and use the block form when both
    /// off-diagonal spin blocks vanish exactly.
    pub fn from_matrix(m: &CMatrix, n: usize) -> Self {
        assert_eq!(m.nrows(), 2 * n);
        let off_zero = m.slice(s![0..n, n..2 * n]).iter().all(|z| *z == ZERO)
            && m.slice(s![n..2 * n, 0..n]).iter().all(|z| *z == ZERO);
        if off_zero {
            let b0 = m.slice(s![0..n, 0..n]).as_standard_layout().into_owned();
            let b1 = m
                .slice(s![n..2 * n, n..2 * n])
                .as_standard_layout()
                .into_owned();
            StructuredOp::SpinBlocks {
                n,
                blocks: [b0, b1],
            }
        } else {
            StructuredOp::Dense(m.as_standard_layout().into_owned())
        }
    }

    pub fn dim(&self) -> usize {
        match self {
            StructuredOp::Dense(m) => m.nrows(),
            StructuredOp::SpinBlocks { n, .. } => 2 * n,
        }
    }

    pub fn is_block(&self) -> bool {
        matches!(self, StructuredOp::SpinBlocks { .. })
    }

    pub fn to_dense(&self) -> CMatrix {
        match self {
            StructuredOp::Dense(m) => m.clone(),
            StructuredOp::SpinBlocks { n, blocks } => {
                let mut out = Array2::zeros((2 * n, 2 * n));
                out.slice_mut(s![0..*n, 0..*n]).assign(&blocks[0]);
                out.slice_mut(s![*n.., *n..]).assign(&blocks[1]);
                out
            }
        }
    }

    /// A zero operator with the same storage layout.
    pub fn zeros_like(&self) -> Self {
        match self {
            StructuredOp::Dense(m) => StructuredOp::Dense(Array2::zeros(m.dim())),
            StructuredOp::SpinBlocks { n, .. } => StructuredOp::SpinBlocks {
                n: *n,
                blocks: [Array2::zeros((*n, *n)), Array2::zeros((*n, *n))],
            },
        }
    }

    /// Convert `other` into this operator's layout. Fails when `self` is in
    /// block form and `other` couples the spin sectors.
    pub fn same_layout(&self, other: &CMatrix) -> Option<Self> {
        match self {
            StructuredOp::Dense(_) => {
                Some(StructuredOp::Dense(other.as_standard_layout().into_owned()))
            }
            StructuredOp::SpinBlocks { n, .. } => match StructuredOp::from_matrix(other, *n) {
                b @ StructuredOp::SpinBlocks { .. } => Some(b),
                StructuredOp::Dense(_) => None,
            },
        }
    }

    /// `self += c · other` (identical layouts).
    pub fn add_scaled(&mut self, c: C64, other: &StructuredOp) {
        match (self, other) {
            (StructuredOp::Dense(a), StructuredOp::Dense(b)) => a.scaled_add(c, b),
            (
                StructuredOp::SpinBlocks { blocks: a, .. },
                StructuredOp::SpinBlocks { blocks: b, .. },
            ) => {
                a[0].scaled_add(c, &b[0]);
                a[1].scaled_add(c, &b[1]);
            }
            _ => panic!("layout mismatch in StructuredOp::add_scaled"),
        }
    }

    pub fn assign(&mut self, other: &StructuredOp) {
        match (self, other) {
            (StructuredOp::Dense(a), StructuredOp::Dense(b)) => a.assign(b),
            (
                StructuredOp::SpinBlocks { blocks: a, .. },
                StructuredOp::SpinBlocks { blocks: b, .. },
            ) => {
                a[0].assign(&b[0]);
                a[1].assign(&b[1]);
            }
            _ => panic!("layout mismatch in StructuredOp::assign"),
        }
    }

    /// `y = self · x`.
    pub fn apply_into(&self, x: &[C64], y: &mut [C64]) {
        match self {
            StructuredOp::Dense(m) => {
                let n = m.nrows();
                matvec_into(m.as_slice().expect("standard layout"), n, x, y);
            }
            StructuredOp::SpinBlocks { n, blocks } => {
                let n = *n;
                let (y0, y1) = y.split_at_mut(n);
                matvec_into(
                    blocks[0].as_slice().expect("standard layout"),
                    n,
                    &x[..n],
                    y0,
                );
                matvec_into(
                    blocks[1].as_slice().expect("standard layout"),
                    n,
                    &x[n..2 * n],
                    y1,
                );
            }
        }
    }

    pub fn apply(&self, x: &CVector) -> CVector {
        let mut y = Array1::zeros(self.dim());
        self.apply_into(x.as_slice().expect("contiguous"), y.as_slice_mut().unwrap());
        y
    }

    /// `self · rho`.
    pub fn left_mul(&self, rho: &CMatrix) -> CMatrix {
        match self {
            StructuredOp::Dense(m) => m.dot(rho),
            StructuredOp::SpinBlocks { n, blocks } => {
                let n = *n;
                let mut out = Array2::zeros(rho.dim());
                for s in 0..2 {
                    for c in 0..2 {
                        let src = rho.slice(s![s * n..(s + 1) * n, c * n..(c + 1) * n]);
                        if is_zero_view(&src) {
                            continue;
                        }
                        let dst = out.slice_mut(s![s * n..(s + 1) * n, c * n..(c + 1) * n]);
                        gemm_into(blocks[s].view(), src, dst);
                    }
                }
                out
            }
        }
    }

    /// `rho · self`.
    pub fn right_mul(&self, rho: &CMatrix) -> CMatrix {
        match self {
            StructuredOp::Dense(m) => rho.dot(m),
            StructuredOp::SpinBlocks { n, blocks } => {
                let n = *n;
                let mut out = Array2::zeros(rho.dim());
                for r in 0..2 {
                    for s in 0..2 {
                        let src = rho.slice(s![r * n..(r + 1) * n, s * n..(s + 1) * n]);
                        if is_zero_view(&src) {
                            continue;
                        }
                        let dst = out.slice_mut(s![r * n..(r + 1) * n, s * n..(s + 1) * n]);
                        gemm_into(src, blocks[s].view(), dst);
                    }
                }
                out
            }
        }
    }

    pub fn adjoint(&self) -> Self {
        match self {
            StructuredOp::Dense(m) => {
                StructuredOp::Dense(adjoint(m).as_standard_layout().into_owned())
            }
            StructuredOp::SpinBlocks { n, blocks } => StructuredOp::SpinBlocks {
                n: *n,
                blocks: [
                    adjoint(&blocks[0]).as_standard_layout().into_owned(),
                    adjoint(&blocks[1]).as_standard_layout().into_owned(),
                ],
            },
        }
    }

    /// `tr(self · rho)`.
    pub fn trace_with(&self, rho: &CMatrix) -> C64 {
        let mut acc = ZERO;
        match self {
            StructuredOp::Dense(m) => {
                let d = m.nrows();
                for i in 0..d {
                    for j in 0..d {
                        acc += m[[i, j]] * rho[[j, i]];
                    }
                }
            }
            StructuredOp::SpinBlocks { n, blocks } => {
                let n = *n;
                for (s, b) in blocks.iter().enumerate() {
                    let o = s * n;
                    for i in 0..n {
                        for j in 0..n {
                            acc += b[[i, j]] * rho[[o + j, o + i]];
                        }
                    }
                }
            }
        }
        acc
    }

    /// `⟨x|self|x⟩` using `buf` as scratch (length ≥ dim).
    pub fn expect_with(&self, x: &[C64], buf: &mut [C64]) -> C64 {
        let d = self.dim();
        self.apply_into(x, &mut buf[..d]);
        inner(x, &buf[..d])
    }

    /// Row-sum norm of the full operator.
    pub fn inf_norm(&self) -> f64 {
        match self {
            StructuredOp::Dense(m) => inf_norm(m),
            StructuredOp::SpinBlocks { blocks, .. } => {
                inf_norm(&blocks[0]).max(inf_norm(&blocks[1]))
            }
        }
    }
}

fn is_zero_view(v: &ArrayView2<C64>) -> bool {
    v.iter().all(|z| *z == ZERO)
}

fn gemm_into(a: ArrayView2<C64>, b: ArrayView2<C64>, mut c: ArrayViewMut2<C64>) {
    ndarray::linalg::general_mat_mul(ONE, &a, &b, ZERO, &mut c);
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    #[test]
    fn kron_layout_is_spin_slow() {
        let a = array![[ONE, ZERO], [ZERO, -ONE]];
        let b = array![[ZERO, ONE], [ONE, ZERO]];
        let k = kron(&a, &b);
        assert_eq!(k[[0, 1]], ONE);
        assert_eq!(k[[2, 3]], -ONE);
        assert_eq!(k[[0, 3]], ZERO);
    }

    #[test]
    fn block_op_matches_dense() {
        let n = 3;
        let mut m = Array2::<C64>::zeros((6, 6));
        for i in 0..3 {
            for j in 0..3 {
                m[[i, j]] = C64::new((i + 2 * j) as f64, 0.5 * i as f64);
                m[[i + 3, j + 3]] = C64::new(-(j as f64), (i * j) as f64);
            }
        }
        let op = StructuredOp::from_matrix(&m, n);
        assert!(op.is_block());
        let rho = Array2::from_shape_fn((6, 6), |(i, j)| {
            C64::new((i as f64).sin(), (j as f64).cos())
        });
        assert!(max_abs(&(op.left_mul(&rho) - m.dot(&rho))) < 1e-12);
        assert!(max_abs(&(op.right_mul(&rho) - rho.dot(&m))) < 1e-12);
        let x = Array1::from_shape_fn(6, |i| C64::new(i as f64, 1.0));
        assert!((op.apply(&x) - m.dot(&x)).iter().all(|z| z.norm() < 1e-12));
    }

    #[test]
    fn trace_distance_of_orthogonal_pure_states_is_one() {
        let a = array![[ONE, ZERO], [ZERO, ZERO]];
        let b = array![[ZERO, ZERO], [ZERO, ONE]];
        assert!((trace_distance(&a, &b) - 1.0).abs() < 1e-12);
    }
}
