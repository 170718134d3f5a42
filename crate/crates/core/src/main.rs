use clap::{Args, Parser, Subcommand};
use spinmrfm::harness::{self, ExperimentKind, HarnessError, RunConfig, EXIT_WARNINGS};
use std::path::PathBuf;
use std::process::ExitCode;

#[derive(Parser)]
#[command(
    name = "spinmrfm",
    version,
    about = "Single-spin force-microscopy measurement simulator"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Execute an experiment and write its outputs and manifest.
    Run(RunArgs),
    /// Check a configuration without running it.
    Validate(RunArgs),
    /// Inspect the built-in parameter presets.
    Preset {
        #[command(subcommand)]
        action: PresetAction,
    },
}

#[derive(Subcommand)]
enum PresetAction {
    List,
    Show { name: String },
}

#[derive(Args)]
struct RunArgs {
    /// TOML run configuration.
    #[arg(long, env = "SPINMRFM_CONFIG")]
    config: Option<PathBuf>,
    #[arg(long, env = "SPINMRFM_PRESET")]
    preset: Option<String>,
    /// unitary_compare, master, sme, qsd_ensemble, snr_report, noise_spectrum or readout_study.
    #[arg(long, env = "SPINMRFM_KIND")]
    kind: Option<String>,
    #[arg(long, env = "SPINMRFM_N_TRAJ")]
    n_traj: Option<usize>,
    #[arg(long, env = "SPINMRFM_SEED")]
    seed: Option<u64>,
    #[arg(long, env = "SPINMRFM_DT")]
    dt: Option<f64>,
    #[arg(long, env = "SPINMRFM_FOCK")]
    fock: Option<usize>,
    #[arg(long, env = "SPINMRFM_OUT")]
    out: Option<PathBuf>,
    #[arg(long, env = "SPINMRFM_WORKERS")]
    workers: Option<usize>,
}

impl RunArgs {
    /// The file configuration with command-line values on top.
    fn build(&self) -> Result<RunConfig, HarnessError> {
        let mut cfg = match &self.config {
            Some(path) => {
                let text = std::fs::read_to_string(path)
                    .map_err(|e| HarnessError::Config(format!("{}: {e}", path.display())))?;
                RunConfig::from_toml(&text)?
            }
            None => {
                let kind = self.kind.as_deref().ok_or_else(|| {
                    HarnessError::Config("either --config or --kind is required".into())
                })?;
                RunConfig::new(kind.parse()?, "desk-small")
            }
        };
        if let Some(k) = &self.kind {
            cfg.kind = k.parse::<ExperimentKind>()?;
        }
        if let Some(p) = &self.preset {
            cfg.preset = Some(p.clone());
        }
        if let Some(v) = self.n_traj {
            cfg.n_traj = Some(v);
        }
        if let Some(v) = self.seed {
            cfg.base_seed = v;
        }
        if let Some(v) = self.dt {
            cfg.solver.dt = Some(v);
        }
        if let Some(v) = self.fock {
            cfg.fock = Some(v);
        }
        if let Some(v) = &self.out {
            cfg.out_dir = Some(v.clone());
        }
        if let Some(v) = self.workers {
            cfg.workers = v;
        }
        Ok(cfg)
    }
}

fn json<T: serde::Serialize>(v: &T) -> String {
    serde_json::to_string_pretty(v).unwrap_or_else(|e| format!("{{\"error\": \"{e}\"}}"))
}

fn fail(e: HarnessError) -> ExitCode {
    eprintln!("error: {e}");
    ExitCode::from(e.exit_code() as u8)
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = Cli::parse();
    match cli.command {
        Command::Run(args) => {
            let cfg = match args.build() {
                Ok(c) => c,
                Err(e) => return fail(e),
            };
            match harness::run(&cfg) {
                Ok(m) => {
                    println!("{}", json(&m.summary));
                    for w in &m.warnings {
                        eprintln!("warning: {w}");
                    }
                    if m.has_warnings() {
                        ExitCode::from(EXIT_WARNINGS as u8)
                    } else {
                        ExitCode::SUCCESS
                    }
                }
                Err(e) => fail(e),
            }
        }
        Command::Validate(args) => {
            let cfg = match args.build() {
                Ok(c) => c,
                Err(e) => return fail(e),
            };
            let d = harness::validate(&cfg);
            println!("{}", json(&d));
            if !d.is_valid() {
                ExitCode::from(1)
            } else if !d.warnings.is_empty() {
                ExitCode::from(EXIT_WARNINGS as u8)
            } else {
                ExitCode::SUCCESS
            }
        }
        Command::Preset {
            action: PresetAction::List,
        } => {
            for name in harness::preset_names() {
                match harness::preset(name) {
                    Ok(p) => println!("{name}\t{}", p.description),
                    Err(e) => return fail(e),
                }
            }
            ExitCode::SUCCESS
        }
        Command::Preset {
            action: PresetAction::Show { name },
        } => match harness::preset(&name) {
            Ok(p) => {
                println!("{}", json(&p));
                ExitCode::SUCCESS
            }
            Err(e) => fail(e),
        },
    }
}
