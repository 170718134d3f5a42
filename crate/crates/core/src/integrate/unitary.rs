use super::{
    check_dt, CompiledGenerator, IntegrateError, Scheme, SolverConfig, StateSnapshot,
    StepDiagnostics, TrajectoryMeta, TrajectoryResult,
};
use crate::hilbert::{self, CompositeState};
use crate::linalg::{self, StructuredOp, C64};
use crate::model::{
    hamiltonian_full_op, hamiltonian_rwa_op, DriveProfile, ModelOperators, PhysParams, RwaSign,
    TimeDependentOp,
};
use serde::{Deserialize, Serialize};

/// Recorded observables ⟨Z⟩, ⟨p⟩, ⟨S_z'⟩ in block form.
pub(crate) struct Probes {
    z: StructuredOp,
    p: StructuredOp,
    sz: StructuredOp,
    buf: Vec<C64>,
}

impl Probes {
    pub(crate) fn new(ops: &ModelOperators) -> Self {
        let n = ops.basis.n_levels();
        Self {
            z: StructuredOp::from_matrix(&ops.z_full.matrix, n),
            p: StructuredOp::from_matrix(&ops.p_full.matrix, n),
            sz: StructuredOp::from_matrix(&ops.sz_full.matrix, n),
            buf: vec![C64::new(0.0, 0.0); 2 * n],
        }
    }

    /// Expectations of a normalized vector.
    pub(crate) fn pure(&mut self, psi: &[C64]) -> (f64, f64, f64) {
        (
            self.z.expect_with(psi, &mut self.buf).re,
            self.p.expect_with(psi, &mut self.buf).re,
            self.sz.expect_with(psi, &mut self.buf).re,
        )
    }

    pub(crate) fn mixed(&self, rho: &linalg::CMatrix) -> (f64, f64, f64) {
        (
            self.z.trace_with(rho).re,
            self.p.trace_with(rho).re,
            self.sz.trace_with(rho).re,
        )
    }
}

pub(crate) fn step_count(t0: f64, t1: f64, dt: f64) -> Result<usize, IntegrateError> {
    if !(t1 >= t0) {
        return Err(IntegrateError::Invalid(format!(
            "t1 = {t1} precedes t0 = {t0}"
        )));
    }
    let n = ((t1 - t0) / dt).round();
    if ((n * dt) - (t1 - t0)).abs() > 1e-6 * dt.max(t1 - t0) {
        return Err(IntegrateError::Invalid(format!(
            "interval {} is not a multiple of dt = {dt}",
            t1 - t0
        )));
    }
    Ok(n as usize)
}

/// Recording helper shared by all solvers.
pub(crate) struct Recorder {
    pub(crate) out: TrajectoryResult,
    threshold: f64,
}

impl Recorder {
    pub(crate) fn new(
        cfg: &SolverConfig,
        n_channels: usize,
        initial: StateSnapshot,
        preset: &str,
    ) -> Self {
        Self {
            out: TrajectoryResult {
                times: Vec::new(),
                z: Vec::new(),
                p: Vec::new(),
                sz: Vec::new(),
                dw: vec![Vec::new(); n_channels],
                record_dt: cfg.record_dt(),
                states: Vec::new(),
                final_state: initial,
                truncation_warning: false,
                max_top_population: 0.0,
                diagnostics: StepDiagnostics::default(),
                meta: TrajectoryMeta {
                    preset: preset.to_string(),
                    seed: cfg.seed,
                    scheme: cfg.scheme,
                    dt: cfg.dt,
                },
            },
            threshold: cfg.truncation_threshold,
        }
    }

    pub(crate) fn push(&mut self, t: f64, (z, p, sz): (f64, f64, f64), top: f64, dw: &[f64]) {
        let o = &mut self.out;
        o.times.push(t);
        o.z.push(z);
        o.p.push(p);
        o.sz.push(sz);
        for (c, v) in o.dw.iter_mut().zip(dw) {
            c.push(*v);
        }
        o.max_top_population = o.max_top_population.max(top);
        if top > self.threshold && !o.truncation_warning {
            o.truncation_warning = true;
            let msg = format!(
                "top Fock level population {top:.3e} exceeds {:.1e} at t = {t}",
                self.threshold
            );
            log::warn!("{msg}");
            o.diagnostics.warnings.push(msg);
        }
    }
}

pub(crate) fn top_population(psi: &[C64]) -> f64 {
    let n = psi.len() / 2;
    psi[n - 1].norm_sqr() + psi[2 * n - 1].norm_sqr()
}

/// `y = x + h·k`.
#[inline]
pub(crate) fn axpy_into(x: &[C64], h: f64, k: &[C64], y: &mut [C64]) {
    for ((yi, xi), ki) in y.iter_mut().zip(x).zip(k) {
        *yi = xi + ki * h;
    }
}

/// Classic RK4 on dψ/dt = −(i/ħ)H(t)ψ.
pub fn evolve_unitary(
    state: &CompositeState,
    h: &TimeDependentOp,
    ops: &ModelOperators,
    t0: f64,
    t1: f64,
    cfg: &SolverConfig,
) -> Result<TrajectoryResult, IntegrateError> {
    cfg.validate()?;
    if state.amplitudes().len() != h.dim() {
        return Err(IntegrateError::Invalid(
            "state and Hamiltonian dimensions differ".into(),
        ));
    }
    let gen = CompiledGenerator::new(h, &[], ops.hbar)?;
    let n_steps = step_count(t0, t1, cfg.dt)?;
    let mut rec = Recorder::new(cfg, 0, StateSnapshot::Pure(state.clone()), "");
    check_dt(cfg.dt, gen.energy_scale(t0, t1)?, &mut rec.out.diagnostics)?;
    let mut probes = Probes::new(ops);
    let d = gen.dim();
    let mut psi: Vec<C64> = state.amplitudes().to_vec();
    let zero = C64::new(0.0, 0.0);
    let (mut k1, mut k2, mut k3, mut k4, mut tmp) = (
        vec![zero; d],
        vec![zero; d],
        vec![zero; d],
        vec![zero; d],
        vec![zero; d],
    );
    let mut m0 = gen.workspace();
    let mut mh = gen.workspace();
    let mut m1 = gen.workspace();
    gen.assemble(t0, &mut m0)?;
    let dt = cfg.dt;
    let record = |rec: &mut Recorder, probes: &mut Probes, t: f64, psi: &[C64]| {
        let n2 = if cfg.renormalize_each_step {
            1.0
        } else {
            linalg::norm_sqr(psi)
        };
        let (z, p, sz) = probes.pure(psi);
        rec.push(t, (z / n2, p / n2, sz / n2), top_population(psi) / n2, &[]);
        if cfg.record_states {
            let v = ndarray::Array1::from_vec(psi.to_vec());
            rec.out.states.push(StateSnapshot::Pure(
                CompositeState::new(v, &ops.basis).expect("finite state"),
            ));
        }
    };
    record(&mut rec, &mut probes, t0, &psi);
    let mut worst_norm_drift = 0.0f64;
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
        ma.apply_into(&psi, &mut k1);
        axpy_into(&psi, 0.5 * dt, &k1, &mut tmp);
        mb.apply_into(&tmp, &mut k2);
        axpy_into(&psi, 0.5 * dt, &k2, &mut tmp);
        mb.apply_into(&tmp, &mut k3);
        axpy_into(&psi, dt, &k3, &mut tmp);
        mc.apply_into(&tmp, &mut k4);
        for i in 0..d {
            psi[i] += (k1[i] + (k2[i] + k3[i]) * 2.0 + k4[i]) * (dt / 6.0);
        }
        if !gen.is_constant() {
            std::mem::swap(&mut m0, &mut m1);
        }
        let nrm = linalg::norm_sqr(&psi).sqrt();
        if !nrm.is_finite() {
            return Err(IntegrateError::NonFinite(t + dt));
        }
        worst_norm_drift = worst_norm_drift.max((nrm - 1.0).abs());
        if cfg.renormalize_each_step {
            psi.iter_mut().for_each(|z| *z /= nrm);
        }
        if (step + 1) % cfg.record_stride == 0 {
            record(&mut rec, &mut probes, t + dt, &psi);
        }
    }
    let span = (t1 - t0).max(1.0);
    let diag = &mut rec.out.diagnostics;
    diag.min_pre_norm = 1.0 - worst_norm_drift;
    diag.max_pre_norm = 1.0 + worst_norm_drift;
    if !cfg.renormalize_each_step && worst_norm_drift > 1e-8 * span {
        let msg = format!("norm drift {worst_norm_drift:.3e} over an interval of {span}");
        log::warn!("{msg}");
        diag.warnings.push(msg);
    }
    rec.out.final_state = StateSnapshot::Pure(CompositeState::new(
        ndarray::Array1::from_vec(psi),
        &ops.basis,
    )?);
    Ok(rec.out)
}

/// Inputs of the full-versus-rotating-wave comparison.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CompareSpec {
    pub t_end: f64,
    pub dt_rwa: f64,
    pub dt_full: f64,
    /// Spacing of the paired ⟨Z⟩ samples.
    pub record_interval: f64,
    /// Times at which position densities are compared.
    pub density_times: Vec<f64>,
    pub z_grid: Vec<f64>,
    /// Budget on steps × dim² of the full-Hamiltonian run.
    pub max_cost: f64,
    #[serde(default)]
    pub rwa_sign: RwaSign,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RwaComparison {
    pub times: Vec<f64>,
    pub z_full: Vec<f64>,
    pub z_rwa: Vec<f64>,
    /// max |⟨Z⟩_full − ⟨Z⟩_rwa| / max |⟨Z⟩_full|.
    pub max_rel_deviation: f64,
    pub density_times: Vec<f64>,
    pub z_grid: Vec<f64>,
    pub densities_full: Vec<Vec<f64>>,
    pub densities_rwa: Vec<Vec<f64>>,
    pub l1_distances: Vec<f64>,
    pub max_l1: f64,
}

/// Evolve `initial` under the full and the rotating-wave Hamiltonians and
/// compare ⟨Z⟩ and the position density.
pub fn compare_full_vs_rwa(
    params: &PhysParams,
    profile: &DriveProfile,
    ops: &ModelOperators,
    initial: &CompositeState,
    spec: &CompareSpec,
) -> Result<RwaComparison, IntegrateError> {
    let stride = |dt: f64| -> Result<usize, IntegrateError> {
        let s = (spec.record_interval / dt).round();
        if s < 1.0 || (s * dt - spec.record_interval).abs() > 1e-9 * spec.record_interval {
            return Err(IntegrateError::Invalid(format!(
                "record interval is not a multiple of dt = {dt}"
            )));
        }
        Ok(s as usize)
    };
    let d = ops.dim() as f64;
    let cost = (spec.t_end / spec.dt_full) * d * d;
    if cost > spec.max_cost {
        return Err(IntegrateError::Budget {
            cost,
            budget: spec.max_cost,
        });
    }
    let full = hamiltonian_full_op(params, profile, ops);
    let rwa = hamiltonian_rwa_op(params, profile, ops, spec.rwa_sign);
    let cfg_full = SolverConfig::new(spec.dt_full, Scheme::Rk4Unitary)
        .with_stride(stride(spec.dt_full)?)
        .with_states(true);
    let cfg_rwa = SolverConfig::new(spec.dt_rwa, Scheme::Rk4Unitary)
        .with_stride(stride(spec.dt_rwa)?)
        .with_states(true);
    let a = evolve_unitary(initial, &full, ops, 0.0, spec.t_end, &cfg_full)?;
    let b = evolve_unitary(initial, &rwa, ops, 0.0, spec.t_end, &cfg_rwa)?;
    let n = a.times.len().min(b.times.len());
    let scale = a.z[..n].iter().fold(0.0f64, |m, v| m.max(v.abs()));
    let dev = a.z[..n]
        .iter()
        .zip(&b.z[..n])
        .fold(0.0f64, |m, (x, y)| m.max((x - y).abs()));
    let mut out = RwaComparison {
        times: a.times[..n].to_vec(),
        z_full: a.z[..n].to_vec(),
        z_rwa: b.z[..n].to_vec(),
        max_rel_deviation: if scale > 0.0 { dev / scale } else { dev },
        density_times: Vec::new(),
        z_grid: spec.z_grid.clone(),
        densities_full: Vec::new(),
        densities_rwa: Vec::new(),
        l1_distances: Vec::new(),
        max_l1: 0.0,
    };
    let dz = if spec.z_grid.len() > 1 {
        spec.z_grid[1] - spec.z_grid[0]
    } else {
        0.0
    };
    for &t in &spec.density_times {
        let k = ((t / spec.record_interval).round() as usize).min(n - 1);
        let density = |s: &StateSnapshot| match s {
            StateSnapshot::Pure(psi) => hilbert::position_density_pure(psi, &spec.z_grid, params),
            StateSnapshot::Mixed(rho) => hilbert::position_density(rho, &spec.z_grid, params),
        };
        let pa = density(&a.states[k]);
        let pb = density(&b.states[k]);
        let l1 = pa.iter().zip(&pb).map(|(x, y)| (x - y).abs()).sum::<f64>() * dz;
        out.density_times.push(a.times[k]);
        out.densities_full.push(pa);
        out.densities_rwa.push(pb);
        out.l1_distances.push(l1);
        out.max_l1 = out.max_l1.max(l1);
    }
    Ok(out)
}
