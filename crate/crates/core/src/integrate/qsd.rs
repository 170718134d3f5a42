use super::unitary::{axpy_into, step_count, top_population, Probes, Recorder};
use super::{
    check_dt, CompiledGenerator, IntegrateError, Scheme, SolverConfig, StateSnapshot,
    TrajectoryResult, WienerPath,
};
use crate::hilbert::{CompositeState, Operator};
use crate::linalg::{self, StructuredOp, C64};
use crate::model::{ModelOperators, TimeDependentOp};

const ZERO: C64 = C64::new(0.0, 0.0);

/// Scratch space for one QSD trajectory.
struct Work {
    lpsi: Vec<Vec<C64>>,
    buf: Vec<C64>,
}

/// `⟨φ|L|φ⟩/⟨φ|φ⟩` for every active channel, with `lpsi[j] = Lφ`.
fn expectations(gen: &CompiledGenerator, phi: &[C64], w: &mut Work, out: &mut [C64]) {
    let n2 = linalg::norm_sqr(phi);
    for (j, (_, l, _)) in gen.lindblads().iter().enumerate() {
        l.apply_into(phi, &mut w.lpsi[j]);
        out[j] = linalg::inner(phi, &w.lpsi[j]) / n2;
    }
}

/// Drift `Mφ + Σ (2⟨L⟩*L − |⟨L⟩|²)φ`.
fn drift(
    m: &StructuredOp,
    gen: &CompiledGenerator,
    phi: &[C64],
    w: &mut Work,
    ev: &mut [C64],
    out: &mut [C64],
) {
    expectations(gen, phi, w, ev);
    m.apply_into(phi, out);
    for (j, e) in ev.iter().enumerate() {
        let c = e.conj() * 2.0;
        let s = e.norm_sqr();
        for ((o, lp), p) in out.iter_mut().zip(&w.lpsi[j]).zip(phi) {
            *o += c * lp - p * s;
        }
    }
}

/// Diffusion of one channel, `√2 (L − ⟨L⟩)φ`, added with weight `wgt`.
fn add_diffusion(l: &StructuredOp, phi: &[C64], wgt: f64, buf: &mut [C64], out: &mut [C64]) {
    l.apply_into(phi, buf);
    let e = linalg::inner(phi, buf) / linalg::norm_sqr(phi);
    let c = std::f64::consts::SQRT_2 * wgt;
    for ((o, b), p) in out.iter_mut().zip(buf.iter()).zip(phi) {
        *o += (b - e * p) * c;
    }
}

/// Quantum state diffusion with real noise:
/// `dψ = [−(i/ħ)H + Σ(2⟨L⟩*L − L†L − |⟨L⟩|²)]ψ dt + Σ √2 (L − ⟨L⟩)ψ dW_j`.
/// Channel `j` of `wiener` drives `lindblads[j]`; the run covers
/// `wiener.n_steps()` steps.
pub fn evolve_qsd(
    psi: &CompositeState,
    h: &TimeDependentOp,
    lindblads: &[Operator],
    ops: &ModelOperators,
    wiener: &WienerPath,
    t0: f64,
    cfg: &SolverConfig,
) -> Result<TrajectoryResult, IntegrateError> {
    cfg.validate()?;
    if wiener.n_channels() != lindblads.len() {
        return Err(IntegrateError::Invalid(format!(
            "{} Lindblad operators but {} noise channels",
            lindblads.len(),
            wiener.n_channels()
        )));
    }
    if (wiener.dt() - cfg.dt).abs() > 1e-12 * cfg.dt {
        return Err(IntegrateError::Invalid(
            "Wiener path dt differs from the solver dt".into(),
        ));
    }
    let gen = CompiledGenerator::new(h, lindblads, ops.hbar)?;
    if psi.amplitudes().len() != gen.dim() {
        return Err(IntegrateError::Invalid(
            "state and Hamiltonian dimensions differ".into(),
        ));
    }
    let n_steps = wiener.n_steps();
    let dt = cfg.dt;
    let t1 = t0 + n_steps as f64 * dt;
    step_count(t0, t1, dt)?;
    let nc = wiener.n_channels();
    let mut rec = Recorder::new(cfg, nc, StateSnapshot::Pure(psi.clone()), "");
    check_dt(dt, gen.energy_scale(t0, t1)?, &mut rec.out.diagnostics)?;
    rec.out.diagnostics.min_pre_norm = f64::INFINITY;
    rec.out.diagnostics.max_pre_norm = 0.0;
    let mut probes = Probes::new(ops);
    let d = gen.dim();
    let na = gen.lindblads().len();
    let mut w = Work {
        lpsi: vec![vec![ZERO; d]; na],
        buf: vec![ZERO; d],
    };
    let mut ev = vec![ZERO; na];
    let mut state: Vec<C64> = psi.amplitudes().to_vec();
    let (mut k1, mut k2, mut k3, mut k4, mut tmp) = (
        vec![ZERO; d],
        vec![ZERO; d],
        vec![ZERO; d],
        vec![ZERO; d],
        vec![ZERO; d],
    );
    let mut next = vec![ZERO; d];
    let mut support = vec![ZERO; d];
    let mut m0 = gen.workspace();
    let mut mh = gen.workspace();
    let mut m1 = gen.workspace();
    gen.assemble(t0, &mut m0)?;
    let milstein = cfg.scheme == Scheme::MilsteinDiag;
    let sq = dt.sqrt();
    let mut dw_acc = vec![0.0; nc];
    let record = |rec: &mut Recorder, probes: &mut Probes, t: f64, psi: &[C64], dws: &[f64]| {
        rec.push(t, probes.pure(psi), top_population(psi), dws);
        if cfg.record_states {
            let v = ndarray::Array1::from_vec(psi.to_vec());
            rec.out.states.push(StateSnapshot::Pure(
                CompositeState::new(v, &ops.basis).expect("finite state"),
            ));
        }
    };
    record(&mut rec, &mut probes, t0, &state, &dw_acc);

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
        drift(ma, &gen, &state, &mut w, &mut ev, &mut k1);
        axpy_into(&state, 0.5 * dt, &k1, &mut tmp);
        drift(mb, &gen, &tmp, &mut w, &mut ev, &mut k2);
        axpy_into(&state, 0.5 * dt, &k2, &mut tmp);
        drift(mb, &gen, &tmp, &mut w, &mut ev, &mut k3);
        axpy_into(&state, dt, &k3, &mut tmp);
        drift(mc, &gen, &tmp, &mut w, &mut ev, &mut k4);
        for i in 0..d {
            next[i] = state[i] + (k1[i] + (k2[i] + k3[i]) * 2.0 + k4[i]) * (dt / 6.0);
        }
        let incs = wiener.step(step);
        for (c, acc) in dw_acc.iter_mut().enumerate() {
            *acc += incs[c];
        }
        for (ch, l, _) in gen.lindblads() {
            let dw = incs[*ch];
            add_diffusion(l, &state, dw, &mut w.buf, &mut next);
            if milstein {
                // ψ̃ = ψ + a·dt + b·√dt
                axpy_into(&state, dt, &k1, &mut support);
                add_diffusion(l, &state, sq, &mut w.buf, &mut support);
                let wgt = 0.5 * (dw * dw - dt) / sq;
                add_diffusion(l, &support, wgt, &mut w.buf, &mut next);
                add_diffusion(l, &state, -wgt, &mut w.buf, &mut next);
            }
        }
        if !gen.is_constant() {
            std::mem::swap(&mut m0, &mut m1);
        }
        let nrm = linalg::norm_sqr(&next).sqrt();
        if !nrm.is_finite() {
            return Err(IntegrateError::NonFinite(t + dt));
        }
        let diag = &mut rec.out.diagnostics;
        diag.min_pre_norm = diag.min_pre_norm.min(nrm);
        diag.max_pre_norm = diag.max_pre_norm.max(nrm);
        if !(0.5..=2.0).contains(&nrm) {
            return Err(IntegrateError::NormBlowup {
                norm: nrm,
                t: t + dt,
            });
        }
        if cfg.renormalize_each_step {
            next.iter_mut().for_each(|z| *z /= nrm);
        }
        std::mem::swap(&mut state, &mut next);
        if (step + 1) % cfg.record_stride == 0 {
            let n2 = linalg::norm_sqr(&state);
            if cfg.renormalize_each_step {
                record(&mut rec, &mut probes, t + dt, &state, &dw_acc);
            } else {
                let scaled: Vec<C64> = state.iter().map(|z| z / n2.sqrt()).collect();
                record(&mut rec, &mut probes, t + dt, &scaled, &dw_acc);
            }
            dw_acc.iter_mut().for_each(|a| *a = 0.0);
        }
    }
    rec.out.final_state = StateSnapshot::Pure(CompositeState::new(
        ndarray::Array1::from_vec(state),
        &ops.basis,
    )?);
    Ok(rec.out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::hilbert::{fock_state, FockBasis};
    use crate::integrate::evolve_unitary;
    use crate::model::{
        hamiltonian_eff_op, hamiltonian_rwa_op, lindblad_meas, lindblad_thermal, DriveProfile,
        PhysParams, RwaSign,
    };

    fn model(n: usize) -> (PhysParams, DriveProfile, ModelOperators) {
        let mut p = PhysParams::unit_oscillator();
        p.eta = 0.2;
        p.epsilon = 50.0;
        p.gamma_m = 0.02;
        p.kT = 2.0;
        p.kappa = 0.5;
        p.E_drive = 5.0;
        p.gamma_c = 100.0;
        let d = DriveProfile::PaperRampSine {
            f0: -100.0,
            slope: 20.0,
            t_switch: 5.0,
            amplitude: 60.0,
            omega: 1.0,
        };
        let ops = ModelOperators::new(&p, &d, &FockBasis::new(n).unwrap()).unwrap();
        (p, d, ops)
    }

    fn superposition(ops: &ModelOperators) -> CompositeState {
        let s = C64::new(0.5f64.sqrt(), 0.0);
        CompositeState::product([s, s], &fock_state(0, &ops.basis).unwrap(), &ops.basis).unwrap()
    }

    #[test]
    fn zero_lindblads_reduce_to_unitary() {
        let (p, d, ops) = model(10);
        let h = hamiltonian_rwa_op(&p, &d, &ops, RwaSign::Projected);
        let zero = Operator::general(linalg::CMatrix::zeros((20, 20)));
        let psi = superposition(&ops);
        let dt = 1e-3;
        let w = WienerPath::generate(2, 4000, dt, 1);
        let cfg = SolverConfig::new(dt, Scheme::EulerMaruyama).with_stride(200);
        let a = evolve_qsd(&psi, &h, &[zero.clone(), zero], &ops, &w, 0.0, &cfg).unwrap();
        let b = evolve_unitary(&psi, &h, &ops, 0.0, 4.0, &cfg).unwrap();
        assert_eq!(a.z, b.z);
        assert_eq!(a.sz, b.sz);
    }

    #[test]
    fn norm_is_preserved_to_first_order() {
        let (p, d, ops) = model(12);
        let h = hamiltonian_eff_op(&p, &d, &ops);
        let ls = [lindblad_thermal(&p, &ops), lindblad_meas(&p, &ops)];
        let dt = 1e-3;
        let w = WienerPath::generate(2, 5000, dt, 2);
        let cfg = SolverConfig::new(dt, Scheme::EulerMaruyama).with_stride(100);
        let r = evolve_qsd(&superposition(&ops), &h, &ls, &ops, &w, 0.0, &cfg).unwrap();
        assert!((r.diagnostics.max_pre_norm - 1.0).abs() < 0.05);
        assert!((r.diagnostics.min_pre_norm - 1.0).abs() < 0.05);
        assert!(r.sz.iter().all(|s| s.abs() <= 0.5 + 1e-9));
        // increments are recorded per interval
        let total: f64 = r.dw[1].iter().sum();
        assert!((total - w.channel(1).iter().sum::<f64>()).abs() < 1e-10);
    }

    #[test]
    fn channel_mismatch_is_rejected() {
        let (p, d, ops) = model(6);
        let h = hamiltonian_eff_op(&p, &d, &ops);
        let ls = [lindblad_thermal(&p, &ops)];
        let w = WienerPath::generate(2, 10, 1e-3, 2);
        let cfg = SolverConfig::new(1e-3, Scheme::EulerMaruyama);
        assert!(evolve_qsd(&superposition(&ops), &h, &ls, &ops, &w, 0.0, &cfg).is_err());
    }
}
