use super::IntegrateError;
use crate::hilbert::Operator;
use crate::linalg::{self, StructuredOp, C64};
use crate::model::{Coefficient, TimeDependentOp};

/// Number of sample times used to bound the generator norm over a run.
const SCALE_SAMPLES: usize = 257;

/// Pre-assembled pieces of `M(t) = −(i/ħ)H(t) − Σ L†L` and the Lindblad
/// operators, all in the same storage layout.
#[derive(Debug, Clone)]
pub struct CompiledGenerator {
    dim: usize,
    h: TimeDependentOp,
    constant: StructuredOp,
    varying: Vec<(Coefficient, StructuredOp)>,
    lindblads: Vec<(usize, StructuredOp, StructuredOp)>,
    n_channels: usize,
}

impl CompiledGenerator {
    /// `lindblads[j]` drives noise channel `j`; all-zero operators are kept
    /// as silent channels.
    pub fn new(
        h: &TimeDependentOp,
        lindblads: &[Operator],
        hbar: f64,
    ) -> Result<Self, IntegrateError> {
        let dim = h.dim();
        if dim == 0 || !dim.is_multiple_of(2) {
            return Err(IntegrateError::Invalid(format!(
                "Hamiltonian dimension {dim} is not 2N"
            )));
        }
        for l in lindblads {
            if l.dim() != dim {
                return Err(IntegrateError::Invalid(format!(
                    "Lindblad dimension {} != {dim}",
                    l.dim()
                )));
            }
        }
        let n = dim / 2;
        let mut blocky = true;
        let minus_i = C64::new(0.0, -1.0 / hbar);
        let mut constant = linalg::CMatrix::zeros((dim, dim));
        let mut varying_dense = Vec::new();
        for (c, op) in h.terms() {
            blocky &= StructuredOp::from_matrix(&op.matrix, n).is_block();
            match c {
                Coefficient::Constant(v) => {
                    if *v != 0.0 {
                        constant.scaled_add(minus_i * *v, &op.matrix);
                    }
                }
                _ => varying_dense.push((*c, op.matrix.mapv(|z| z * minus_i))),
            }
        }
        let mut active = Vec::new();
        for (j, l) in lindblads.iter().enumerate() {
            if linalg::max_abs(&l.matrix) == 0.0 {
                continue;
            }
            blocky &= StructuredOp::from_matrix(&l.matrix, n).is_block();
            let ld = linalg::adjoint(&l.matrix);
            constant -= &ld.dot(&l.matrix);
            active.push((j, l.matrix.clone(), ld));
        }
        let wrap = |m: &linalg::CMatrix| {
            if blocky {
                StructuredOp::from_matrix(m, n)
            } else {
                StructuredOp::Dense(m.as_standard_layout().into_owned())
            }
        };
        Ok(Self {
            dim,
            h: h.clone(),
            constant: wrap(&constant),
            varying: varying_dense.iter().map(|(c, m)| (*c, wrap(m))).collect(),
            lindblads: active
                .iter()
                .map(|(j, l, ld)| (*j, wrap(l), wrap(ld)))
                .collect(),
            n_channels: lindblads.len(),
        })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn n_channels(&self) -> usize {
        self.n_channels
    }

    pub fn is_block(&self) -> bool {
        self.constant.is_block()
    }

    pub fn is_constant(&self) -> bool {
        self.varying.is_empty()
    }

    /// Active Lindblad operators as `(channel, L, L†)`.
    pub fn lindblads(&self) -> &[(usize, StructuredOp, StructuredOp)] {
        &self.lindblads
    }

    /// A zeroed operator with the generator's layout.
    pub fn workspace(&self) -> StructuredOp {
        self.constant.zeros_like()
    }

    /// Write `M(t)` into `out`.
    pub fn assemble(&self, t: f64, out: &mut StructuredOp) -> Result<(), IntegrateError> {
        out.assign(&self.constant);
        for (c, op) in &self.varying {
            let v = self.h.coefficient(*c, t)?;
            if v != 0.0 {
                out.add_scaled(C64::new(v, 0.0), op);
            }
        }
        Ok(())
    }

    /// Upper bound on the generator rate over `[t0, t1]`.
    pub fn energy_scale(&self, t0: f64, t1: f64) -> Result<f64, IntegrateError> {
        let mut m = self.workspace();
        let mut worst = 0.0f64;
        let samples = if self.is_constant() { 1 } else { SCALE_SAMPLES };
        for k in 0..samples {
            let t = if samples == 1 {
                t0
            } else {
                t0 + (t1 - t0) * k as f64 / (samples - 1) as f64
            };
            self.assemble(t, &mut m)?;
            worst = worst.max(m.inf_norm());
        }
        let jump: f64 = self
            .lindblads
            .iter()
            .map(|(_, l, ld)| 2.0 * l.inf_norm() * ld.inf_norm())
            .sum();
        Ok(worst + jump)
    }
}

/// Generator rate bound for `h` and `lindblads` on `[t0, t1]`.
pub fn energy_scale(
    h: &TimeDependentOp,
    lindblads: &[Operator],
    hbar: f64,
    t0: f64,
    t1: f64,
) -> Result<f64, IntegrateError> {
    CompiledGenerator::new(h, lindblads, hbar)?.energy_scale(t0, t1)
}
