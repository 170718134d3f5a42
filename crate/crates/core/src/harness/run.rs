use super::config::{ExperimentKind, Resolved, RunConfig, SpinInit};
use super::preset::{preset, MonitoringResolution};
use super::validate::{validate_resolved, Diagnostics};
use super::HarnessError;
use crate::hilbert::{coherent_state, CompositeState, FockBasis, Operator};
use crate::integrate::{
    compare_full_vs_rwa, ensemble_map, ensemble_run, evolve_master, evolve_sme, write_binary,
    write_csv, CompareSpec, EnsembleResult, EnsembleSpec, SolverConfig, TrajectoryResult,
    WienerPath, MEASUREMENT_CHANNEL,
};
use crate::linalg::{C64, ONE, ZERO};
use crate::measure::{
    classify_spin, collapse_time, photocurrent, photocurrent_from_series, quadrature_demod,
    SpinOutcome, COLLAPSE_FRACTION,
};
use crate::model::{
    hamiltonian_eff_op, lindblad_meas, lindblad_thermal, DerivedParams, DriveProfile,
    ModelOperators, PhysParams, TimeDependentOp,
};
use crate::spectra::{noise_components, noise_spectrum, snr_at_resonance};
use serde::{Deserialize, Serialize};
use serde_json::json;
use sha2::{Digest, Sha256};
use std::fmt::Write as _;
use std::io::Write as _;
use std::path::Path;

pub const CODE_VERSION: &str = concat!(env!("CARGO_PKG_NAME"), " ", env!("CARGO_PKG_VERSION"));

const MANIFEST_NAME: &str = "manifest.json";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OutputFile {
    /// Path relative to the output directory.
    pub path: String,
    pub bytes: u64,
    pub sha256: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub code_version: String,
    /// Every setting of the run, defaults filled in.
    pub config: RunConfig,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub preset_resolution: Option<MonitoringResolution>,
    pub derived: DerivedParams,
    pub diagnostics: Diagnostics,
    pub seeds: Vec<u64>,
    /// Trajectories whose top Fock level exceeded the population threshold.
    pub truncation_warnings: usize,
    pub warnings: Vec<String>,
    pub outputs: Vec<OutputFile>,
    pub summary: serde_json::Value,
}

impl RunManifest {
    pub fn has_warnings(&self) -> bool {
        !self.warnings.is_empty()
    }
}

/// What an experiment produced, before checksumming.
#[derive(Debug, Clone, Default)]
pub struct ExperimentOutput {
    pub files: Vec<String>,
    pub seeds: Vec<u64>,
    pub truncation_warnings: usize,
    pub warnings: Vec<String>,
    pub summary: serde_json::Value,
}

/// Per-trajectory readout result.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReadoutRow {
    pub index: usize,
    pub seed: u64,
    pub final_sz: f64,
    pub outcome: SpinOutcome,
    pub phase: f64,
    pub amplitude: f64,
    pub confidence: f64,
    /// The decision matches the sign of the final ⟨S_z'⟩.
    pub agrees: bool,
}

/// Create `dir` if needed and prove that files can be written there.
pub fn check_writable(dir: &Path) -> Result<(), HarnessError> {
    let fail = |e: std::io::Error| HarnessError::Output {
        path: dir.display().to_string(),
        reason: e.to_string(),
    };
    std::fs::create_dir_all(dir).map_err(fail)?;
    let probe = dir.join(".spinmrfm-write-probe");
    std::fs::write(&probe, b"").map_err(fail)?;
    std::fs::remove_file(&probe).map_err(fail)?;
    Ok(())
}

/// Resolve, validate, execute and document one run.
pub fn run(config: &RunConfig) -> Result<RunManifest, HarnessError> {
    let r = config.resolve()?;
    let diagnostics = validate_resolved(&r);
    if let Some(c) = diagnostics.cost.as_ref().filter(|c| !c.feasible) {
        return Err(HarnessError::Infeasible {
            cost: c.work,
            budget: c.budget,
        });
    }
    if !diagnostics.is_valid() {
        return Err(HarnessError::Config(diagnostics.errors.join("; ")));
    }
    check_writable(&r.out_dir)?;
    log::info!(
        "running {} ({} trajectories) into {}",
        r.kind.name(),
        r.n_traj,
        r.out_dir.display()
    );
    let out = execute(&r)?;
    let mut outputs = Vec::with_capacity(out.files.len());
    for name in &out.files {
        outputs.push(checksum(&r.out_dir, name)?);
    }
    let mut warnings = diagnostics.warnings.clone();
    warnings.extend(out.warnings.iter().cloned());
    if out.truncation_warnings > 0 {
        warnings.push(format!(
            "{} run(s) exceeded the top-level population threshold {:.1e}",
            out.truncation_warnings, r.truncation_threshold
        ));
    }
    let manifest = RunManifest {
        code_version: CODE_VERSION.to_string(),
        config: r.echo(),
        preset_resolution: r
            .preset
            .as_deref()
            .and_then(|n| preset(n).ok())
            .and_then(|p| p.resolution),
        derived: r.params.derived(),
        diagnostics,
        seeds: out.seeds,
        truncation_warnings: out.truncation_warnings,
        warnings,
        outputs,
        summary: out.summary,
    };
    let text =
        serde_json::to_string_pretty(&manifest).map_err(|e| HarnessError::Config(e.to_string()))?;
    std::fs::write(r.out_dir.join(MANIFEST_NAME), text + "\n")?;
    Ok(manifest)
}

fn checksum(dir: &Path, name: &str) -> Result<OutputFile, HarnessError> {
    let bytes = std::fs::read(dir.join(name))?;
    Ok(OutputFile {
        path: name.to_string(),
        bytes: bytes.len() as u64,
        sha256: hex::encode(Sha256::digest(&bytes)),
    })
}

fn execute(r: &Resolved) -> Result<ExperimentOutput, HarnessError> {
    match r.kind {
        ExperimentKind::UnitaryCompare => unitary_compare(r),
        ExperimentKind::Master => master(r),
        ExperimentKind::Sme => sme(r),
        ExperimentKind::QsdEnsemble => qsd_ensemble(r),
        ExperimentKind::ReadoutStudy => readout_study(r),
        ExperimentKind::SnrReport => snr_report(r),
        ExperimentKind::NoiseSpectrum => spectrum(r),
    }
}

struct Setup {
    ops: ModelOperators,
    initial: CompositeState,
    h: TimeDependentOp,
    lindblads: Vec<Operator>,
}

fn spin_amplitudes(spin: SpinInit) -> [C64; 2] {
    let s = C64::new(std::f64::consts::FRAC_1_SQRT_2, 0.0);
    match spin {
        SpinInit::Up => [ONE, ZERO],
        SpinInit::Down => [ZERO, ONE],
        SpinInit::Superposition => [s, s],
    }
}

fn setup(r: &Resolved) -> Result<Setup, HarnessError> {
    let basis = FockBasis::new(r.fock).map_err(|e| HarnessError::Config(e.to_string()))?;
    let ops = ModelOperators::new(&r.params, &r.drive, &basis)?;
    let osc = coherent_state(C64::new(r.alpha[0], r.alpha[1]), &basis)
        .map_err(|e| HarnessError::Config(e.to_string()))?;
    let initial = CompositeState::product(spin_amplitudes(r.spin), &osc, &basis)
        .map_err(|e| HarnessError::Config(e.to_string()))?;
    let h = hamiltonian_eff_op(&r.params, &r.drive, &ops);
    let lindblads = vec![
        lindblad_thermal(&r.params, &ops),
        lindblad_meas(&r.params, &ops),
    ];
    Ok(Setup {
        ops,
        initial,
        h,
        lindblads,
    })
}

fn solver(r: &Resolved) -> SolverConfig {
    let mut cfg = SolverConfig::new(r.dt, r.scheme)
        .with_stride(r.record_stride())
        .with_seed(r.base_seed);
    cfg.truncation_threshold = r.truncation_threshold;
    cfg
}

fn write_text(dir: &Path, name: &str, text: &str) -> Result<String, HarnessError> {
    let mut f = std::io::BufWriter::new(std::fs::File::create(dir.join(name))?);
    f.write_all(text.as_bytes())?;
    f.flush()?;
    Ok(name.to_string())
}

fn table(header: &str, rows: impl Iterator<Item = Vec<f64>>) -> String {
    let mut s = String::new();
    s.push_str(header);
    s.push('\n');
    for row in rows {
        let cells: Vec<String> = row.iter().map(|v| v.to_string()).collect();
        s.push_str(&cells.join(","));
        s.push('\n');
    }
    s
}

fn solver_warnings(trajs: &[&TrajectoryResult]) -> Vec<String> {
    let mut out: Vec<String> = Vec::new();
    for t in trajs {
        for w in &t.diagnostics.warnings {
            if !out.contains(w) && out.len() < 10 {
                out.push(w.clone());
            }
        }
    }
    out
}

fn unitary_compare(r: &Resolved) -> Result<ExperimentOutput, HarnessError> {
    let s = setup(r)?;
    let spec = CompareSpec {
        t_end: r.compare_t_end,
        dt_rwa: r.dt,
        dt_full: r.dt_full,
        record_interval: r.record_interval,
        density_times: r.density_times.clone(),
        z_grid: r.z_grid(),
        max_cost: r.max_cost,
        rwa_sign: r.rwa_sign,
    };
    let c = compare_full_vs_rwa(&r.params, &r.drive, &s.ops, &s.initial, &spec)?;
    let mut files = vec![write_text(
        &r.out_dir,
        "compare_z.csv",
        &table(
            "t,Z_full,Z_rwa",
            (0..c.times.len()).map(|k| vec![c.times[k], c.z_full[k], c.z_rwa[k]]),
        ),
    )?];
    let rows = c.density_times.iter().enumerate().flat_map(|(i, &t)| {
        let c = &c;
        (0..c.z_grid.len()).map(move |k| {
            vec![
                t,
                c.z_grid[k],
                c.densities_full[i][k],
                c.densities_rwa[i][k],
            ]
        })
    });
    files.push(write_text(
        &r.out_dir,
        "compare_density.csv",
        &table("t,z,full,rwa", rows),
    )?);
    Ok(ExperimentOutput {
        files,
        summary: json!({
            "max_rel_deviation": c.max_rel_deviation,
            "max_l1": c.max_l1,
            "density_times": c.density_times,
            "l1_distances": c.l1_distances,
        }),
        ..ExperimentOutput::default()
    })
}

fn master(r: &Resolved) -> Result<ExperimentOutput, HarnessError> {
    let s = setup(r)?;
    let res = evolve_master(
        &s.initial.to_density(),
        &s.h,
        &s.lindblads,
        &s.ops,
        0.0,
        r.t_end,
        &solver(r),
    )?;
    write_csv(&r.out_dir.join("master.csv"), &res)?;
    let last = res.times.len() - 1;
    Ok(ExperimentOutput {
        files: vec!["master.csv".into()],
        truncation_warnings: res.truncation_warning as usize,
        warnings: solver_warnings(&[&res]),
        summary: json!({
            "final": {"t": res.times[last], "Z": res.z[last], "p": res.p[last], "Sz": res.sz[last]},
            "min_eigenvalue": res.diagnostics.min_eigenvalue,
            "max_trace_drift": res.diagnostics.max_trace_drift,
            "max_top_population": res.max_top_population,
        }),
        ..ExperimentOutput::default()
    })
}

fn ensemble_spec(r: &Resolved) -> EnsembleSpec {
    EnsembleSpec {
        workers: r.workers,
        ..EnsembleSpec::new(r.n_traj, r.base_seed)
    }
}

/// Trajectory files: one CSV each, or a single binary file when requested.
fn write_trajectories(
    r: &Resolved,
    prefix: &str,
    trajs: &[TrajectoryResult],
) -> Result<Vec<String>, HarnessError> {
    if r.binary {
        write_binary(&r.out_dir.join("trajectories.bin"), trajs)?;
        return Ok(vec!["trajectories.bin".into()]);
    }
    let mut names = Vec::with_capacity(trajs.len());
    for (k, t) in trajs.iter().enumerate() {
        let name = format!("{prefix}_{k:05}.csv");
        write_csv(&r.out_dir.join(&name), t)?;
        names.push(name);
    }
    Ok(names)
}

fn write_mean(r: &Resolved, ens: &EnsembleResult) -> Result<String, HarnessError> {
    let rows = (0..ens.times.len()).map(|k| {
        vec![
            ens.times[k],
            ens.mean_z[k],
            ens.mean_p[k],
            ens.mean_sz[k],
            ens.sem_sz[k],
        ]
    });
    write_text(&r.out_dir, "mean.csv", &table("t,Z,p,Sz,Sz_sem", rows))
}

fn sme(r: &Resolved) -> Result<ExperimentOutput, HarnessError> {
    let s = setup(r)?;
    let cfg = solver(r);
    let rho0 = s.initial.to_density();
    let n_steps = (r.t_end / r.dt).round() as usize;
    let ens = ensemble_map(&ensemble_spec(r), |_, seed| {
        let w = WienerPath::generate(1, n_steps, r.dt, seed);
        let mut res = evolve_sme(
            &rho0,
            &s.h,
            &s.lindblads,
            MEASUREMENT_CHANNEL,
            &s.ops,
            &w,
            r.params.e_d,
            0.0,
            &SolverConfig {
                seed,
                ..cfg.clone()
            },
        )?;
        res.meta.seed = seed;
        Ok(res)
    })?;
    let mut files = vec![write_mean(r, &ens)?];
    files.extend(write_trajectories(r, "sme", &ens.trajectories)?);
    let min_eig = ens
        .trajectories
        .iter()
        .map(|t| t.diagnostics.min_eigenvalue)
        .fold(f64::INFINITY, f64::min);
    let finals: Vec<f64> = ens
        .trajectories
        .iter()
        .map(|t| *t.sz.last().expect("nonempty"))
        .collect();
    Ok(ExperimentOutput {
        files,
        seeds: ens.seeds.clone(),
        truncation_warnings: ens.truncation_warnings,
        warnings: solver_warnings(&ens.trajectories.iter().collect::<Vec<_>>()),
        summary: json!({"n_traj": r.n_traj, "final_sz": finals, "min_eigenvalue": min_eig}),
    })
}

/// Collapse statistics of an ensemble: a path counts as collapsed once
/// |⟨S_z'⟩| exceeds 0.45ħ and stays there to the end of the record.
fn collapse_summary(r: &Resolved, trajs: &[TrajectoryResult]) -> serde_json::Value {
    let thr = COLLAPSE_FRACTION * 0.5 * r.params.hbar;
    let mut times: Vec<f64> = Vec::new();
    let mut up = 0usize;
    for t in trajs {
        if let Some(tc) = collapse_time(&t.times, &t.sz, thr, f64::INFINITY) {
            times.push(tc);
        }
        up += (*t.sz.last().expect("nonempty") > 0.0) as usize;
    }
    times.sort_by(f64::total_cmp);
    let n = trajs.len();
    let by_deadline = times.iter().filter(|&&t| t <= r.deadline).count();
    let pct = |q: f64| {
        times
            .get(((times.len() as f64 - 1.0) * q).round() as usize)
            .copied()
    };
    json!({
        "n_traj": n,
        "up_fraction": up as f64 / n as f64,
        "binomial_se": (0.25 / n as f64).sqrt(),
        "collapsed": times.len(),
        "collapsed_by_deadline": by_deadline,
        "deadline": r.deadline,
        "collapse_time_median": pct(0.5),
        "collapse_time_max": times.last(),
    })
}

fn qsd_ensemble(r: &Resolved) -> Result<ExperimentOutput, HarnessError> {
    let s = setup(r)?;
    let ens = ensemble_run(
        &s.initial,
        &s.h,
        &s.lindblads,
        &s.ops,
        0.0,
        r.t_end,
        &solver(r),
        &ensemble_spec(r),
    )?;
    let mut files = vec![write_mean(r, &ens)?];
    files.extend(write_trajectories(r, "traj", &ens.trajectories)?);
    Ok(ExperimentOutput {
        files,
        seeds: ens.seeds.clone(),
        truncation_warnings: ens.truncation_warnings,
        warnings: solver_warnings(&ens.trajectories.iter().collect::<Vec<_>>()),
        summary: collapse_summary(r, &ens.trajectories),
    })
}

/// Demodulated phase of the noise-free photocurrent of a spin-up cantilever
/// in `window`, from the unconditioned master equation.
pub fn reference_phase(
    params: &PhysParams,
    drive: &DriveProfile,
    ops: &ModelOperators,
    t_end: f64,
    cfg: &SolverConfig,
    bin_width: f64,
    window: (f64, f64),
) -> Result<f64, HarnessError> {
    let osc = coherent_state(ZERO, &ops.basis).map_err(|e| HarnessError::Config(e.to_string()))?;
    let up = CompositeState::product([ONE, ZERO], &osc, &ops.basis)
        .map_err(|e| HarnessError::Config(e.to_string()))?;
    let h = hamiltonian_eff_op(params, drive, ops);
    let ls = vec![lindblad_thermal(params, ops), lindblad_meas(params, ops)];
    let cfg = SolverConfig::new(cfg.dt, crate::integrate::Scheme::Rk4Lindblad)
        .with_stride(cfg.record_stride);
    let res = evolve_master(&up.to_density(), &h, &ls, ops, 0.0, t_end, &cfg)?;
    let zeros = vec![0.0; res.times.len()];
    let rec =
        photocurrent_from_series(&res.times, &res.z, &zeros, res.record_dt, params, bin_width)?;
    Ok(quadrature_demod(&rec, params.omega_m, window)?.phase)
}

/// Classify every trajectory from its synthesized photocurrent.
pub fn classify_ensemble(
    trajs: &[TrajectoryResult],
    params: &PhysParams,
    bin_width: f64,
    window: (f64, f64),
    reference: f64,
) -> Result<Vec<ReadoutRow>, HarnessError> {
    trajs
        .iter()
        .enumerate()
        .map(|(index, t)| {
            let rec = photocurrent(t, params, bin_width)?;
            let d = classify_spin(&rec, params.omega_m, reference, window)?;
            let final_sz = *t.sz.last().expect("nonempty");
            let agrees = d.outcome.spin().is_some_and(|s| s * final_sz > 0.0);
            Ok(ReadoutRow {
                index,
                seed: t.meta.seed,
                final_sz,
                outcome: d.outcome,
                phase: d.phase_estimate,
                amplitude: d.amplitude,
                confidence: d.confidence,
                agrees,
            })
        })
        .collect()
}

fn readout_study(r: &Resolved) -> Result<ExperimentOutput, HarnessError> {
    let s = setup(r)?;
    let cfg = solver(r);
    let window = (r.window[0], r.window[1]);
    let reference = reference_phase(
        &r.params,
        &r.drive,
        &s.ops,
        r.t_end,
        &cfg,
        r.bin_width,
        window,
    )?;
    let ens = ensemble_run(
        &s.initial,
        &s.h,
        &s.lindblads,
        &s.ops,
        0.0,
        r.t_end,
        &cfg,
        &ensemble_spec(r),
    )?;
    let rows = classify_ensemble(&ens.trajectories, &r.params, r.bin_width, window, reference)?;
    let mut text = String::from("index,seed,final_sz,outcome,phase,amplitude,confidence,agrees\n");
    for row in &rows {
        let outcome = match row.outcome {
            SpinOutcome::Up => "up",
            SpinOutcome::Down => "down",
            SpinOutcome::NoDecision => "none",
        };
        writeln!(
            text,
            "{},{},{},{},{},{},{},{}",
            row.index,
            row.seed,
            row.final_sz,
            outcome,
            row.phase,
            row.amplitude,
            row.confidence,
            row.agrees
        )
        .expect("string write");
    }
    let files = vec![write_text(&r.out_dir, "readout.csv", &text)?];
    let agree = rows.iter().filter(|x| x.agrees).count();
    let undecided = rows
        .iter()
        .filter(|x| x.outcome == SpinOutcome::NoDecision)
        .count();
    Ok(ExperimentOutput {
        files,
        seeds: ens.seeds.clone(),
        truncation_warnings: ens.truncation_warnings,
        warnings: solver_warnings(&ens.trajectories.iter().collect::<Vec<_>>()),
        summary: json!({
            "agreement": agree as f64 / rows.len() as f64,
            "undecided": undecided,
            "reference_phase": reference,
            "window": r.window,
            "bin_width": r.bin_width,
            "collapse": collapse_summary(r, &ens.trajectories),
        }),
    })
}

fn snr_report(r: &Resolved) -> Result<ExperimentOutput, HarnessError> {
    let rep = snr_at_resonance(
        &r.params,
        &r.drive,
        r.convention,
        &r.omega_grid(),
        &r.bandwidths,
    )?;
    let rows = (0..rep.omega_grid.len()).map(|k| vec![rep.omega_grid[k], rep.snr_of_omega[k]]);
    let files = vec![write_text(
        &r.out_dir,
        "snr.csv",
        &table("omega,snr", rows),
    )?];
    let mut summary =
        serde_json::to_value(&rep).map_err(|e| HarnessError::Config(e.to_string()))?;
    if let Some(m) = summary.as_object_mut() {
        m.remove("omega_grid");
        m.remove("snr_of_omega");
    }
    Ok(ExperimentOutput {
        files,
        summary,
        ..ExperimentOutput::default()
    })
}

fn spectrum(r: &Resolved) -> Result<ExperimentOutput, HarnessError> {
    let grid = r.omega_grid();
    let ns = noise_spectrum(&r.params, &grid)?;
    let rep = snr_at_resonance(&r.params, &r.drive, r.convention, &grid, &r.bandwidths)?;
    let rows = (0..grid.len()).map(|k| {
        vec![
            grid[k],
            ns.shot[k],
            ns.backaction[k],
            ns.thermal[k],
            ns.total[k],
            rep.snr_of_omega[k],
        ]
    });
    let files = vec![write_text(
        &r.out_dir,
        "noise_spectrum.csv",
        &table("omega,shot,backaction,thermal,total,snr", rows),
    )?];
    let (shot, ba, th) = noise_components(&r.params, r.params.omega_m);
    Ok(ExperimentOutput {
        files,
        summary: json!({
            "at_resonance": {"shot": shot, "backaction": ba, "thermal": th, "total": shot + ba + th},
            "thermal_dominates": th > shot && th > ba,
            "infinite_cutoff": ns.infinite_cutoff,
            "snr_at_resonance": rep.snr_at_resonance,
            "snr_at_resonance_physical": rep.snr_at_resonance_physical,
            "convention": rep.convention_description,
        }),
        ..ExperimentOutput::default()
    })
}
