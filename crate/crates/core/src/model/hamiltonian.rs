use super::{frame, DriveProfile, ModelError, PhysParams};
use crate::hilbert::{self, FockBasis, Operator};
use crate::linalg::{self, CMatrix, C64, I};
use serde::{Deserialize, Serialize};

/// Every matrix the model is assembled from, built once per (params, N).
#[derive(Debug, Clone)]
pub struct ModelOperators {
    pub basis: FockBasis,
    pub hbar: f64,
    /// Mixing angle at t = 0, which fixes the storage basis.
    pub theta0: f64,
    /// Oscillator-space Z, p and H_Z.
    pub z: Operator,
    pub p: Operator,
    pub h_z: Operator,
    /// Rotating-frame spin operators on the 2-dim space.
    pub sx: Operator,
    pub sy: Operator,
    pub sz: Operator,
    /// Laboratory S_z, S_x expressed in the storage basis.
    pub sz_lab: Operator,
    pub sx_lab: Operator,
    /// Composite-space operators.
    pub z_full: Operator,
    pub p_full: Operator,
    pub h_z_full: Operator,
    pub sz_full: Operator,
    pub z_sz: Operator,
    pub z_sz_lab: Operator,
    pub sz_lab_full: Operator,
    pub sx_lab_full: Operator,
    pub zp_sym_full: Operator,
}

impl ModelOperators {
    pub fn new(
        params: &PhysParams,
        profile: &DriveProfile,
        basis: &FockBasis,
    ) -> Result<Self, ModelError> {
        params.validate()?;
        profile.validate()?;
        let (_, theta0) = frame::lambda_theta(params, profile, 0.0)?;
        let (z, p) = hilbert::position_momentum_ops(basis, params)?;
        let zz = z.dot(&z).matrix;
        let pp = p.dot(&p).matrix;
        let h_z = Operator::new(
            pp.mapv(|v| v / (2.0 * params.m))
                + zz.mapv(|v| v * 0.5 * params.m * params.omega_m.powi(2)),
            true,
        )?;
        let zp_sym = Operator::new(linalg::anticommutator(&z.matrix, &p.matrix), true)?;
        let (sx, sy, sz) = hilbert::spin_ops(params.hbar);
        let h = 0.5 * params.hbar;
        let (st, ct) = theta0.sin_cos();
        let c = |v: f64| C64::new(h * v, 0.0);
        let sz_lab = Operator::new(ndarray::array![[c(ct), c(-st)], [c(-st), c(-ct)]], true)?;
        let sx_lab = Operator::new(ndarray::array![[c(st), c(ct)], [c(ct), c(-st)]], true)?;
        let n = basis.n_levels();
        let id_n = Operator::identity(n);
        let id_2 = Operator::identity(2);
        Ok(Self {
            basis: *basis,
            hbar: params.hbar,
            theta0,
            z_full: hilbert::tensor(&id_2, &z)?,
            p_full: hilbert::tensor(&id_2, &p)?,
            h_z_full: hilbert::tensor(&id_2, &h_z)?,
            sz_full: hilbert::tensor(&sz, &id_n)?,
            z_sz: hilbert::tensor(&sz, &z)?,
            z_sz_lab: hilbert::tensor(&sz_lab, &z)?,
            sz_lab_full: hilbert::tensor(&sz_lab, &id_n)?,
            sx_lab_full: hilbert::tensor(&sx_lab, &id_n)?,
            zp_sym_full: hilbert::tensor(&id_2, &zp_sym)?,
            z,
            p,
            h_z,
            sx,
            sy,
            sz,
            sz_lab,
            sx_lab,
        })
    }

    pub fn dim(&self) -> usize {
        self.basis.composite_dim()
    }
}

/// Time dependence of one Hamiltonian term.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum Coefficient {
    Constant(f64),
    /// `scale · f(t)`.
    Drive(f64),
    /// `scale · f(t)/λ(t)`.
    DriveRatio(f64),
}

/// `Σ_k c_k(t) A_k` with fixed matrices and scalar time dependence.
#[derive(Debug, Clone)]
pub struct TimeDependentOp {
    profile: DriveProfile,
    epsilon: f64,
    terms: Vec<(Coefficient, Operator)>,
}

impl TimeDependentOp {
    pub fn new(profile: &DriveProfile, epsilon: f64) -> Self {
        Self {
            profile: profile.clone(),
            epsilon,
            terms: Vec::new(),
        }
    }

    pub fn push(&mut self, coefficient: Coefficient, op: Operator) {
        self.terms.push((coefficient, op));
    }

    pub fn terms(&self) -> &[(Coefficient, Operator)] {
        &self.terms
    }

    pub fn dim(&self) -> usize {
        self.terms.first().map_or(0, |(_, op)| op.dim())
    }

    pub fn is_constant(&self) -> bool {
        self.terms
            .iter()
            .all(|(c, _)| matches!(c, Coefficient::Constant(_)))
    }

    pub fn coefficient(&self, c: Coefficient, t: f64) -> Result<f64, ModelError> {
        Ok(match c {
            Coefficient::Constant(v) => v,
            Coefficient::Drive(s) => s * self.profile.f(t)?,
            Coefficient::DriveRatio(s) => {
                let f = self.profile.f(t)?;
                s * f / f.hypot(self.epsilon)
            }
        })
    }

    pub fn coefficients_at(&self, t: f64) -> Result<Vec<f64>, ModelError> {
        self.terms
            .iter()
            .map(|(c, _)| self.coefficient(*c, t))
            .collect()
    }

    pub fn at(&self, t: f64) -> Result<Operator, ModelError> {
        let d = self.dim();
        let mut m = CMatrix::zeros((d, d));
        let mut hermitian = true;
        for (c, op) in &self.terms {
            let v = self.coefficient(*c, t)?;
            if v != 0.0 {
                m.scaled_add(C64::new(v, 0.0), &op.matrix);
            }
            hermitian &= op.hermitian;
        }
        Ok(Operator {
            matrix: m,
            hermitian,
        })
    }

    pub fn profile(&self) -> &DriveProfile {
        &self.profile
    }
}

/// Sign of the rotating-wave coupling.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RwaSign {
    /// Projection of −2ηZ S_z onto the instantaneous eigenstates:
    /// −2η cosΘ Z S_z' = +2η (f/λ) Z S_z'.
    #[default]
    Projected,
    /// The opposite sign, −2η (f/λ) Z S_z'.
    Flipped,
}

/// H_Z − 2ηZ S_z + f(t) S_z − ε S_x, laboratory spin operators in the storage basis.
pub fn hamiltonian_full_op(
    params: &PhysParams,
    profile: &DriveProfile,
    ops: &ModelOperators,
) -> TimeDependentOp {
    let mut h = TimeDependentOp::new(profile, params.epsilon);
    h.push(Coefficient::Constant(1.0), ops.h_z_full.clone());
    h.push(
        Coefficient::Constant(-2.0 * params.eta),
        ops.z_sz_lab.clone(),
    );
    h.push(Coefficient::Drive(1.0), ops.sz_lab_full.clone());
    h.push(
        Coefficient::Constant(-params.epsilon),
        ops.sx_lab_full.clone(),
    );
    h
}

pub fn hamiltonian_rwa_op(
    params: &PhysParams,
    profile: &DriveProfile,
    ops: &ModelOperators,
    sign: RwaSign,
) -> TimeDependentOp {
    let s = match sign {
        RwaSign::Projected => 1.0,
        RwaSign::Flipped => -1.0,
    };
    let mut h = TimeDependentOp::new(profile, params.epsilon);
    h.push(Coefficient::Constant(1.0), ops.h_z_full.clone());
    h.push(
        Coefficient::DriveRatio(s * 2.0 * params.eta),
        ops.z_sz.clone(),
    );
    h
}

/// H_rwa + (4κE²/γ_c²) Z + (γ_m/2)(Zp + pZ).
pub fn hamiltonian_eff_op(
    params: &PhysParams,
    profile: &DriveProfile,
    ops: &ModelOperators,
) -> TimeDependentOp {
    let mut h = hamiltonian_rwa_op(params, profile, ops, RwaSign::Projected);
    if !params.drop_constant_force && params.constant_force() != 0.0 {
        h.push(
            Coefficient::Constant(params.constant_force()),
            ops.z_full.clone(),
        );
    }
    if params.gamma_m != 0.0 {
        h.push(
            Coefficient::Constant(0.5 * params.gamma_m),
            ops.zp_sym_full.clone(),
        );
    }
    h
}

pub fn hamiltonian_full(
    params: &PhysParams,
    profile: &DriveProfile,
    t: f64,
    ops: &ModelOperators,
) -> Result<Operator, ModelError> {
    hamiltonian_full_op(params, profile, ops).at(t)
}

pub fn hamiltonian_rwa(
    params: &PhysParams,
    profile: &DriveProfile,
    t: f64,
    ops: &ModelOperators,
) -> Result<Operator, ModelError> {
    hamiltonian_rwa_op(params, profile, ops, RwaSign::Projected).at(t)
}

pub fn hamiltonian_eff(
    params: &PhysParams,
    profile: &DriveProfile,
    t: f64,
    ops: &ModelOperators,
) -> Result<Operator, ModelError> {
    hamiltonian_eff_op(params, profile, ops).at(t)
}

/// Thermal Lindblad operator √(γ_m/2)((1/ℓ)Z + i(ℓ/ħ)p).
pub fn lindblad_thermal(params: &PhysParams, ops: &ModelOperators) -> Operator {
    let ell = params.ell();
    let amp = (0.5 * params.gamma_m).sqrt();
    let m = ops.z_full.matrix.mapv(|v| v * (amp / ell))
        + ops
            .p_full
            .matrix
            .mapv(|v| v * I * (amp * ell / params.hbar));
    Operator {
        matrix: m,
        hermitian: false,
    }
}

/// Measurement Lindblad operator √(8κ²E²/γ_c³) Z.
pub fn lindblad_meas(params: &PhysParams, ops: &ModelOperators) -> Operator {
    ops.z_full.scaled(params.meas_coefficient())
}

/// `2LρL† − {L†L, ρ}`.
pub fn dissipator(l: &CMatrix, rho: &CMatrix) -> CMatrix {
    let ld = linalg::adjoint(l);
    let ldl = ld.dot(l);
    l.dot(rho).dot(&ld).mapv(|v| v * 2.0) - ldl.dot(rho) - rho.dot(&ldl)
}
