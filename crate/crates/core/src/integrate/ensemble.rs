use super::{
    evolve_qsd, IntegrateError, SolverConfig, StateSnapshot, TrajectoryResult, WienerPath,
};
use crate::hilbert::{CompositeState, DensityOperator, Operator};
use crate::linalg::CMatrix;
use crate::model::{ModelOperators, TimeDependentOp};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

/// Seed of trajectory `k`: a splitmix64 mix of `(base, k)`.
pub fn trajectory_seed(base: u64, k: u64) -> u64 {
    let mut z = base ^ k.wrapping_add(1).wrapping_mul(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EnsembleSpec {
    pub n_traj: usize,
    pub base_seed: u64,
    /// Worker threads; 0 uses the global pool.
    #[serde(default)]
    pub workers: usize,
    /// Trajectories held in memory at once before reduction.
    #[serde(default = "default_batch")]
    pub batch: usize,
    /// Accumulate the mean of |ψ⟩⟨ψ| at every recorded time.
    #[serde(default)]
    pub mean_density: bool,
    /// Keep per-trajectory results (without state snapshots).
    #[serde(default = "default_keep")]
    pub keep_trajectories: bool,
}

fn default_batch() -> usize {
    64
}
fn default_keep() -> bool {
    true
}

impl EnsembleSpec {
    pub fn new(n_traj: usize, base_seed: u64) -> Self {
        Self {
            n_traj,
            base_seed,
            workers: 0,
            batch: default_batch(),
            mean_density: false,
            keep_trajectories: true,
        }
    }
}

#[derive(Debug, Clone)]
pub struct EnsembleResult {
    pub seeds: Vec<u64>,
    pub times: Vec<f64>,
    pub mean_z: Vec<f64>,
    pub mean_p: Vec<f64>,
    pub mean_sz: Vec<f64>,
    /// Standard error of the ⟨S_z'⟩ mean.
    pub sem_sz: Vec<f64>,
    pub mean_density: Option<Vec<DensityOperator>>,
    pub trajectories: Vec<TrajectoryResult>,
    pub truncation_warnings: usize,
}

/// Run `n_traj` independent trajectories. `run(k, seed)` must depend only on
/// its arguments; results are reduced in index order, so the output does not
/// depend on the worker count.
pub fn ensemble_map<F>(spec: &EnsembleSpec, run: F) -> Result<EnsembleResult, IntegrateError>
where
    F: Fn(usize, u64) -> Result<TrajectoryResult, IntegrateError> + Sync,
{
    if spec.n_traj == 0 {
        return Err(IntegrateError::Invalid("n_traj must be >= 1".into()));
    }
    let pool = if spec.workers > 0 {
        Some(
            rayon::ThreadPoolBuilder::new()
                .num_threads(spec.workers)
                .build()
                .map_err(|e| IntegrateError::Invalid(format!("worker pool: {e}")))?,
        )
    } else {
        None
    };
    let seeds: Vec<u64> = (0..spec.n_traj)
        .map(|k| trajectory_seed(spec.base_seed, k as u64))
        .collect();
    let mut acc: Option<Accumulator> = None;
    let mut kept = Vec::new();
    let mut truncation_warnings = 0;
    let batch = spec.batch.max(1);
    for start in (0..spec.n_traj).step_by(batch) {
        let idx: Vec<usize> = (start..(start + batch).min(spec.n_traj)).collect();
        let work = || {
            idx.par_iter()
                .map(|&k| run(k, seeds[k]))
                .collect::<Vec<_>>()
        };
        let results = match &pool {
            Some(p) => p.install(work),
            None => work(),
        };
        for r in results {
            let mut r = r?;
            let a = acc.get_or_insert_with(|| Accumulator::new(&r, spec.mean_density));
            a.add(&r)?;
            truncation_warnings += r.truncation_warning as usize;
            if spec.keep_trajectories {
                r.states.clear();
                kept.push(r);
            }
        }
    }
    let acc = acc.expect("at least one trajectory");
    Ok(acc.finish(seeds, kept, truncation_warnings))
}

struct Accumulator {
    times: Vec<f64>,
    n: usize,
    sum_z: Vec<f64>,
    sum_p: Vec<f64>,
    sum_sz: Vec<f64>,
    sum_sz2: Vec<f64>,
    rho: Option<Vec<CMatrix>>,
    n_levels: usize,
}

impl Accumulator {
    fn new(first: &TrajectoryResult, density: bool) -> Self {
        let m = first.times.len();
        let d = first.z.len();
        let n_levels = match &first.final_state {
            StateSnapshot::Pure(s) => s.n_levels(),
            StateSnapshot::Mixed(r) => r.n_levels(),
        };
        let dim = 2 * n_levels;
        Self {
            times: first.times.clone(),
            n: 0,
            sum_z: vec![0.0; d],
            sum_p: vec![0.0; d],
            sum_sz: vec![0.0; d],
            sum_sz2: vec![0.0; d],
            rho: density.then(|| vec![CMatrix::zeros((dim, dim)); m]),
            n_levels,
        }
    }

    fn add(&mut self, r: &TrajectoryResult) -> Result<(), IntegrateError> {
        if r.times.len() != self.times.len() {
            return Err(IntegrateError::Invalid(
                "trajectories recorded different time grids".into(),
            ));
        }
        for k in 0..self.times.len() {
            self.sum_z[k] += r.z[k];
            self.sum_p[k] += r.p[k];
            self.sum_sz[k] += r.sz[k];
            self.sum_sz2[k] += r.sz[k] * r.sz[k];
        }
        if let Some(rho) = &mut self.rho {
            if r.states.len() != rho.len() {
                return Err(IntegrateError::Invalid(
                    "mean density needs recorded states".into(),
                ));
            }
            for (acc, s) in rho.iter_mut().zip(&r.states) {
                match s {
                    StateSnapshot::Pure(psi) => add_projector(acc, psi),
                    StateSnapshot::Mixed(m) => *acc += &m.matrix,
                }
            }
        }
        self.n += 1;
        Ok(())
    }

    fn finish(
        self,
        seeds: Vec<u64>,
        trajectories: Vec<TrajectoryResult>,
        truncation_warnings: usize,
    ) -> EnsembleResult {
        let n = self.n as f64;
        let mean = |v: &[f64]| v.iter().map(|x| x / n).collect::<Vec<_>>();
        let mean_sz = mean(&self.sum_sz);
        let sem_sz = self
            .sum_sz2
            .iter()
            .zip(&mean_sz)
            .map(|(s2, m)| {
                if self.n < 2 {
                    0.0
                } else {
                    ((s2 - n * m * m).max(0.0) / (n - 1.0) / n).sqrt()
                }
            })
            .collect();
        let basis = crate::hilbert::FockBasis::new(self.n_levels).expect("valid basis");
        EnsembleResult {
            seeds,
            mean_z: mean(&self.sum_z),
            mean_p: mean(&self.sum_p),
            mean_sz,
            sem_sz,
            mean_density: self.rho.map(|v| {
                v.into_iter()
                    .map(|m| DensityOperator::new(m.mapv(|z| z / n), &basis).expect("dimension"))
                    .collect()
            }),
            times: self.times,
            trajectories,
            truncation_warnings,
        }
    }
}

fn add_projector(acc: &mut CMatrix, psi: &CompositeState) {
    let a = psi.amplitudes();
    let d = a.len();
    for i in 0..d {
        let ai = a[i];
        for j in 0..d {
            acc[[i, j]] += ai * a[j].conj();
        }
    }
}

/// QSD ensemble: trajectory `k` draws its Wiener path from
/// `trajectory_seed(base_seed, k)`.
#[allow(clippy::too_many_arguments)]
pub fn ensemble_run(
    initial: &CompositeState,
    h: &TimeDependentOp,
    lindblads: &[Operator],
    ops: &ModelOperators,
    t0: f64,
    t1: f64,
    cfg: &SolverConfig,
    spec: &EnsembleSpec,
) -> Result<EnsembleResult, IntegrateError> {
    let n_steps = super::unitary::step_count(t0, t1, cfg.dt)?;
    let cfg = SolverConfig {
        record_states: cfg.record_states || spec.mean_density,
        ..cfg.clone()
    };
    ensemble_map(spec, |_, seed| {
        let w = WienerPath::generate(lindblads.len(), n_steps, cfg.dt, seed);
        let mut r = evolve_qsd(
            initial,
            h,
            lindblads,
            ops,
            &w,
            t0,
            &SolverConfig {
                seed,
                ..cfg.clone()
            },
        )?;
        r.meta.seed = seed;
        Ok(r)
    })
}

/// Strong-error estimates from runs that share one Brownian path per sample.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConvergenceReport {
    /// Step sizes of the compared levels, coarsest first.
    pub dts: Vec<f64>,
    pub reference_dt: f64,
    /// RMS over samples of the sup-norm error of (⟨Z⟩, ⟨p⟩, ⟨S_z'⟩) against the reference.
    pub errors: Vec<f64>,
    pub error_std: Vec<f64>,
    /// `errors[i] / errors[i+1]`.
    pub ratios: Vec<f64>,
    pub ratio_std: Vec<f64>,
    /// `log2` of each ratio.
    pub orders: Vec<f64>,
    /// RMS sup-norm distance of ⟨Z⟩ between consecutive levels.
    pub successive_z: Vec<f64>,
    pub n_samples: usize,
}

/// Run `run(path, dt, stride)` at `levels` step sizes `dt0/2^i` plus a
/// reference at `dt0/2^levels`. Every level of a sample sees the same
/// Brownian path, coarsened from the reference increments, and records at
/// the same times (every `stride0` coarse steps).
#[allow(clippy::too_many_arguments)]
pub fn step_doubling_check<F>(
    dt0: f64,
    levels: usize,
    n_coarse_steps: usize,
    stride0: usize,
    n_channels: usize,
    n_samples: usize,
    base_seed: u64,
    run: F,
) -> Result<ConvergenceReport, IntegrateError>
where
    F: Fn(&WienerPath, f64, usize) -> Result<TrajectoryResult, IntegrateError> + Sync,
{
    if levels < 2 || n_samples == 0 || stride0 == 0 || !n_coarse_steps.is_multiple_of(stride0) {
        return Err(IntegrateError::Invalid(
            "step doubling needs >= 2 levels, samples and a dividing stride".into(),
        ));
    }
    let fine = 1usize << levels;
    let ref_dt = dt0 / fine as f64;
    let sample = |s: usize| -> Result<(Vec<f64>, Vec<f64>), IntegrateError> {
        let w = WienerPath::generate(
            n_channels,
            n_coarse_steps * fine,
            ref_dt,
            trajectory_seed(base_seed, s as u64),
        );
        let reference = run(&w, ref_dt, stride0 * fine)?;
        let mut errs = Vec::with_capacity(levels);
        let mut runs = Vec::with_capacity(levels);
        for i in 0..levels {
            let factor = fine >> i;
            let wl = w.coarsen(factor)?;
            let r = run(&wl, wl.dt(), stride0 << i)?;
            errs.push(sup_error(&r, &reference)?);
            runs.push(r);
        }
        let succ = runs
            .windows(2)
            .map(|p| sup_diff(&p[0].z, &p[1].z))
            .collect();
        Ok((errs, succ))
    };
    let results: Vec<_> = (0..n_samples).into_par_iter().map(sample).collect();
    let mut sq = vec![Vec::with_capacity(n_samples); levels];
    let mut succ = vec![0.0; levels - 1];
    for r in results {
        let (e, s) = r?;
        for i in 0..levels {
            sq[i].push(e[i] * e[i]);
        }
        for i in 0..levels - 1 {
            succ[i] += s[i] * s[i];
        }
    }
    let n = n_samples as f64;
    let mut errors = Vec::new();
    let mut error_std = Vec::new();
    for v in &sq {
        let m = v.iter().sum::<f64>() / n;
        let var = if n_samples > 1 {
            v.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (n - 1.0)
        } else {
            0.0
        };
        let e = m.sqrt();
        errors.push(e);
        // delta method: se(√m) = se(m) / (2√m)
        error_std.push(if e > 0.0 {
            (var / n).sqrt() / (2.0 * e)
        } else {
            0.0
        });
    }
    let ratios: Vec<f64> = errors.windows(2).map(|w| w[0] / w[1]).collect();
    let ratio_std = (0..levels - 1)
        .map(|i| {
            let a = error_std[i] / errors[i];
            let b = error_std[i + 1] / errors[i + 1];
            ratios[i] * (a * a + b * b).sqrt()
        })
        .collect();
    Ok(ConvergenceReport {
        dts: (0..levels).map(|i| dt0 / (1usize << i) as f64).collect(),
        reference_dt: ref_dt,
        orders: ratios.iter().map(|r| r.log2()).collect(),
        ratios,
        ratio_std,
        errors,
        error_std,
        successive_z: succ.iter().map(|s| (s / n).sqrt()).collect(),
        n_samples,
    })
}

fn sup_diff(a: &[f64], b: &[f64]) -> f64 {
    a.iter()
        .zip(b)
        .fold(0.0f64, |m, (x, y)| m.max((x - y).abs()))
}

fn sup_error(a: &TrajectoryResult, b: &TrajectoryResult) -> Result<f64, IntegrateError> {
    if a.times.len() != b.times.len() {
        return Err(IntegrateError::Invalid(
            "levels recorded different time grids".into(),
        ));
    }
    Ok(sup_diff(&a.z, &b.z)
        .max(sup_diff(&a.p, &b.p))
        .max(sup_diff(&a.sz, &b.sz)))
}
