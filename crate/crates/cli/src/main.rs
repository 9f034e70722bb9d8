mod config;
mod output;

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use fdd_recon::harness::{
    run_crb_experiment, run_false_alarm_experiment, run_phase_error_experiment, run_reconstruction_experiment,
};
use log::info;

use config::{Plan, RunConfig, FULL_BAND_SUBCARRIERS};
use output::Outcome;

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("config error: {0}")]
    Config(String),
    #[error("runtime error: {0}")]
    Runtime(String),
    #[error("verification failed: {0}")]
    Mismatch(String),
}

impl CliError {
    fn exit_code(&self) -> u8 {
        match self {
            CliError::Mismatch(_) => 1,
            CliError::Config(_) => 2,
            CliError::Runtime(_) => 3,
        }
    }
}

#[derive(Parser)]
#[command(
    name = "fdd-recon",
    version = concat!(env!("CARGO_PKG_VERSION"), " (", env!("FDD_RECON_GIT_DESCRIBE"), ")"),
    about = "Monte-Carlo experiments for uplink-aided FDD downlink channel reconstruction"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run the experiment described by a JSON config.
    Run {
        config: PathBuf,
        /// Output directory (default: the config's `output.dir`, else `results`).
        #[arg(long)]
        out: Option<PathBuf>,
        /// Override the trial count.
        #[arg(long)]
        trials: Option<usize>,
        /// Override the seed.
        #[arg(long)]
        seed: Option<u64>,
        /// Worker threads for the trial loop.
        #[arg(long, env = "FDD_RECON_THREADS")]
        threads: Option<usize>,
        /// Use the full 1200-subcarrier band instead of the configured one.
        #[arg(long)]
        paper_scale: bool,
    },
    /// Recompute the config hash of a report and check every output file.
    Verify { report: PathBuf },
}

fn load(path: &Path) -> Result<RunConfig, CliError> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| CliError::Config(format!("cannot read {}: {e}", path.display())))?;
    config::parse(&text)
}

fn execute(plan: &Plan) -> Result<Outcome, CliError> {
    let rt = |e: fdd_recon::Error| CliError::Runtime(e.to_string());
    Ok(match plan {
        Plan::Crb(c) => Outcome::Crb(run_crb_experiment(c).map_err(rt)?),
        Plan::Reconstruction(c) => Outcome::Reconstruction(run_reconstruction_experiment(c).map_err(rt)?),
        Plan::FalseAlarm(c) => Outcome::FalseAlarm(run_false_alarm_experiment(c).map_err(rt)?),
        Plan::PhaseError(c) => Outcome::PhaseError(run_phase_error_experiment(c).map_err(rt)?),
    })
}

fn run(
    path: &Path,
    out: Option<PathBuf>,
    trials: Option<usize>,
    seed: Option<u64>,
    threads: Option<usize>,
    paper_scale: bool,
) -> Result<(), CliError> {
    let mut cfg = load(path)?;
    if let Some(t) = trials {
        cfg.trials = t;
    }
    if let Some(s) = seed {
        cfg.seed = s;
    }
    if paper_scale {
        cfg.system.subcarriers = FULL_BAND_SUBCARRIERS;
    }
    let plan = cfg.plan()?;

    if let Some(t) = threads {
        if t == 0 {
            return Err(CliError::Config("--threads must be >= 1".into()));
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(t)
            .build_global()
            .map_err(|e| CliError::Runtime(e.to_string()))?;
    }

    let dir = out
        .or_else(|| cfg.output.dir.as_ref().map(PathBuf::from))
        .unwrap_or_else(|| PathBuf::from("results"));
    let stem = path
        .file_stem()
        .and_then(|s| s.to_str())
        .filter(|s| !s.is_empty())
        .unwrap_or("run")
        .to_string();

    info!(
        "running {:?}: {} trials, seed {}, config {}",
        cfg.experiment,
        cfg.trials,
        cfg.seed,
        cfg.sha256()
    );
    let outcome = execute(&plan)?;
    info!("finished in {:.2} s", outcome.wall_clock_secs());
    for p in output::write_outputs(&dir, &stem, &cfg, &outcome)? {
        println!("{}", p.display());
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Run {
            config,
            out,
            trials,
            seed,
            threads,
            paper_scale,
        } => run(&config, out, trials, seed, threads, paper_scale),
        Command::Verify { report } => output::verify(&report).map(|n| {
            println!("ok: config hash matches the report and {n} file(s)");
        }),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("fdd-recon: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
