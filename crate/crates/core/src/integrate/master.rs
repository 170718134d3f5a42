use super::unitary::{step_count, Probes, Recorder};
use super::{
    check_dt, CompiledGenerator, IntegrateError, Scheme, SolverConfig, StateSnapshot,
    TrajectoryResult, WienerPath, MEASUREMENT_CHANNEL,
};
use crate::hilbert::{DensityOperator, Operator};
use crate::linalg::{self, CMatrix, StructuredOp, C64};
use crate::model::{ModelOperators, TimeDependentOp};

/// Largest tolerated |tr ρ − 1| before a run aborts.
const TRACE_ABORT: f64 = 1e-6;
/// |tr ρ − 1| above which a warning is recorded.
const TRACE_WARN: f64 = 1e-8;
/// Largest tolerated ‖ρ − ρ†‖ before symmetrization.
const ASYMMETRY_TOL: f64 = 1e-9;
/// Most negative eigenvalue accepted from the conditioned solver.
const SME_POSITIVITY_TOL: f64 = -1e-5;
/// Eigenvalue below which the deterministic solver records a warning.
const LINDBLAD_POSITIVITY_WARN: f64 = -1e-7;

/// Right-hand side `Mρ + (Mρ)† + Σ 2LρL†` of the Lindblad equation.
fn lindblad_rhs(m: &StructuredOp, gen: &CompiledGenerator, rho: &CMatrix) -> CMatrix {
    let a = m.left_mul(rho);
    let mut out = &a + &linalg::adjoint(&a);
    for (_, l, ld) in gen.lindblads() {
        let b = l.left_mul(rho);
        out.scaled_add(C64::new(2.0, 0.0), &ld.right_mul(&b));
    }
    out
}

/// Measurement back-action `√(2e_d)(Lρ + ρL† − tr(Lρ + ρL†)ρ)`.
fn innovation(l: &StructuredOp, ld: &StructuredOp, rho: &CMatrix, coeff: f64) -> CMatrix {
    let mut b = l.left_mul(rho);
    b += &ld.right_mul(rho);
    let tr = linalg::trace(&b);
    b.scaled_add(-tr, rho);
    b.mapv_inplace(|z| z * coeff);
    b
}

struct Noise<'a> {
    wiener: &'a WienerPath,
    l: StructuredOp,
    ld: StructuredOp,
    coeff: f64,
    milstein: bool,
}

fn check_initial(rho: &DensityOperator, dim: usize) -> Result<(), IntegrateError> {
    if rho.matrix.nrows() != dim {
        return Err(IntegrateError::Invalid(
            "density matrix and Hamiltonian dimensions differ".into(),
        ));
    }
    let asym = linalg::hermitian_defect(&rho.matrix);
    if asym > ASYMMETRY_TOL {
        return Err(IntegrateError::Asymmetry(asym));
    }
    let tr = rho.trace();
    if (tr - 1.0).abs() > ASYMMETRY_TOL {
        return Err(IntegrateError::TraceDrift(tr - 1.0));
    }
    Ok(())
}

fn run_density(
    rho0: &DensityOperator,
    gen: &CompiledGenerator,
    ops: &ModelOperators,
    noise: Option<Noise>,
    t0: f64,
    n_steps: usize,
    cfg: &SolverConfig,
    positivity_floor: Option<f64>,
) -> Result<TrajectoryResult, IntegrateError> {
    let dt = cfg.dt;
    let t1 = t0 + n_steps as f64 * dt;
    let n_channels = if noise.is_some() {
        MEASUREMENT_CHANNEL + 1
    } else {
        0
    };
    let mut rec = Recorder::new(cfg, n_channels, StateSnapshot::Mixed(rho0.clone()), "");
    check_dt(dt, gen.energy_scale(t0, t1)?, &mut rec.out.diagnostics)?;
    rec.out.diagnostics.min_eigenvalue = f64::INFINITY;
    let probes = Probes::new(ops);
    let mut rho = rho0.matrix.as_standard_layout().into_owned();
    let mut m0 = gen.workspace();
    let mut mh = gen.workspace();
    let mut m1 = gen.workspace();
    gen.assemble(t0, &mut m0)?;
    let mut dw_acc = 0.0;
    let mut trace_warned = false;
    let mut pos_warned = false;

    let mut record =
        |rec: &mut Recorder, t: f64, rho: &CMatrix, dw: f64| -> Result<(), IntegrateError> {
            let tr = linalg::trace(rho).re;
            let (z, p, sz) = probes.mixed(rho);
            let top = (rho[[ops.basis.n_levels() - 1, ops.basis.n_levels() - 1]].re
                + rho[[2 * ops.basis.n_levels() - 1, 2 * ops.basis.n_levels() - 1]].re)
                / tr;
            let dws = if n_channels > 0 {
                vec![0.0, dw]
            } else {
                Vec::new()
            };
            rec.push(t, (z / tr, p / tr, sz / tr), top, &dws);
            let lam = linalg::hermitian_eigenvalues(rho)[0];
            let diag = &mut rec.out.diagnostics;
            diag.min_eigenvalue = diag.min_eigenvalue.min(lam);
            if let Some(floor) = positivity_floor {
                if lam < floor {
                    return Err(IntegrateError::Positivity { value: lam, t });
                }
            }
            if lam < LINDBLAD_POSITIVITY_WARN && !pos_warned {
                pos_warned = true;
                let msg = format!("density matrix eigenvalue {lam:.3e} at t = {t}");
                log::warn!("{msg}");
                diag.warnings.push(msg);
            }
            if cfg.record_states {
                rec.out
                    .states
                    .push(StateSnapshot::Mixed(DensityOperator::new(
                        rho.clone(),
                        &ops.basis,
                    )?));
            }
            Ok(())
        };
    record(&mut rec, t0, &rho, 0.0)?;

    for step in 0..n_steps {
        let t = t0 + step as f64 * dt;
        if !gen.is_constant() {
            gen.assemble(t + 0.5 * dt, &mut mh)?;
            gen.assemble(t + dt, &mut m1)?;
        }
        let (ma, mb, mc) = if gen.is_constant() {
            (&m0, &m0, &m0)
        } else {
            (&m0, &mh, &m1)
        };
        let k1 = lindblad_rhs(ma, gen, &rho);
        let k2 = lindblad_rhs(mb, gen, &(&rho + &(&k1 * C64::new(0.5 * dt, 0.0))));
        let k3 = lindblad_rhs(mb, gen, &(&rho + &(&k2 * C64::new(0.5 * dt, 0.0))));
        let k4 = lindblad_rhs(mc, gen, &(&rho + &(&k3 * C64::new(dt, 0.0))));
        let mut next = rho.clone();
        let h6 = C64::new(dt / 6.0, 0.0);
        next.scaled_add(h6, &k1);
        next.scaled_add(h6 * 2.0, &k2);
        next.scaled_add(h6 * 2.0, &k3);
        next.scaled_add(h6, &k4);
        if let Some(nz) = &noise {
            let dw = nz.wiener.get(step, 0);
            dw_acc += dw;
            if nz.coeff != 0.0 {
                let b = innovation(&nz.l, &nz.ld, &rho, nz.coeff);
                next.scaled_add(C64::new(dw, 0.0), &b);
                if nz.milstein {
                    let sq = dt.sqrt();
                    let mut support = rho.clone();
                    support.scaled_add(C64::new(dt, 0.0), &k1);
                    support.scaled_add(C64::new(sq, 0.0), &b);
                    let bs = innovation(&nz.l, &nz.ld, &support, nz.coeff);
                    let w = 0.5 * (dw * dw - dt) / sq;
                    next.scaled_add(C64::new(w, 0.0), &bs);
                    next.scaled_add(C64::new(-w, 0.0), &b);
                }
            }
        }
        if !gen.is_constant() {
            std::mem::swap(&mut m0, &mut m1);
        }
        if next.iter().any(|z| !z.is_finite()) {
            return Err(IntegrateError::NonFinite(t + dt));
        }
        let asym = linalg::hermitian_defect(&next);
        if asym > ASYMMETRY_TOL {
            return Err(IntegrateError::Asymmetry(asym));
        }
        linalg::symmetrize(&mut next);
        let tr = linalg::trace(&next).re;
        let drift = (tr - 1.0).abs();
        let diag = &mut rec.out.diagnostics;
        diag.max_trace_drift = diag.max_trace_drift.max(drift);
        if drift > TRACE_ABORT {
            return Err(IntegrateError::TraceDrift(tr - 1.0));
        }
        if drift > TRACE_WARN && !trace_warned {
            trace_warned = true;
            let msg = format!("trace drift {drift:.3e} at t = {}", t + dt);
            log::warn!("{msg}");
            diag.warnings.push(msg);
        }
        if cfg.renormalize_each_step {
            next.mapv_inplace(|z| z / tr);
        }
        rho = next;
        if (step + 1) % cfg.record_stride == 0 {
            record(&mut rec, t + dt, &rho, dw_acc)?;
            dw_acc = 0.0;
        }
    }
    rec.out.final_state = StateSnapshot::Mixed(DensityOperator::new(rho, &ops.basis)?);
    Ok(rec.out)
}

/// RK4 on `dρ/dt = −(i/ħ)[H,ρ] + Σ (2LρL† − {L†L, ρ})`.
pub fn evolve_master(
    rho: &DensityOperator,
    h: &TimeDependentOp,
    lindblads: &[Operator],
    ops: &ModelOperators,
    t0: f64,
    t1: f64,
    cfg: &SolverConfig,
) -> Result<TrajectoryResult, IntegrateError> {
    cfg.validate()?;
    let gen = CompiledGenerator::new(h, lindblads, ops.hbar)?;
    check_initial(rho, gen.dim())?;
    let n_steps = step_count(t0, t1, cfg.dt)?;
    run_density(rho, &gen, ops, None, t0, n_steps, cfg, None)
}

/// Homodyne-conditioned master equation: the Lindblad drift plus
/// `√(2e_d)(Lρ + ρL† − tr(Lρ + ρL†)ρ) dW` for `L = lindblads[measured]`.
/// The run covers `wiener.n_steps()` steps.
#[allow(clippy::too_many_arguments)]
pub fn evolve_sme(
    rho: &DensityOperator,
    h: &TimeDependentOp,
    lindblads: &[Operator],
    measured: usize,
    ops: &ModelOperators,
    wiener: &WienerPath,
    e_d: f64,
    t0: f64,
    cfg: &SolverConfig,
) -> Result<TrajectoryResult, IntegrateError> {
    cfg.validate()?;
    if !(0.0..=1.0).contains(&e_d) {
        return Err(IntegrateError::Invalid(format!(
            "detector efficiency {e_d} outside [0, 1]"
        )));
    }
    if wiener.n_channels() != 1 || (wiener.dt() - cfg.dt).abs() > 1e-12 * cfg.dt {
        return Err(IntegrateError::Invalid(
            "SME needs a one-channel Wiener path with the solver dt".into(),
        ));
    }
    let lm = lindblads.get(measured).ok_or_else(|| {
        IntegrateError::Invalid(format!("no Lindblad operator at index {measured}"))
    })?;
    let gen = CompiledGenerator::new(h, lindblads, ops.hbar)?;
    check_initial(rho, gen.dim())?;
    let layout = gen.workspace();
    let l = layout
        .same_layout(&lm.matrix)
        .ok_or_else(|| IntegrateError::Invalid("measured operator layout mismatch".into()))?;
    let noise = Noise {
        wiener,
        ld: l.adjoint(),
        l,
        coeff: (2.0 * e_d).sqrt(),
        milstein: cfg.scheme == Scheme::MilsteinDiag,
    };
    run_density(
        rho,
        &gen,
        ops,
        Some(noise),
        t0,
        wiener.n_steps(),
        cfg,
        Some(SME_POSITIVITY_TOL),
    )
}
