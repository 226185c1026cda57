use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};
use sphere_bridge::cli::{self, RunConfig, SampleMode, DEFAULT_FRAMES};
use sphere_bridge::sde::Direction;

/// Score-based generative models and Schrödinger bridges on the sphere.
#[derive(Parser)]
#[command(version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, ValueEnum)]
enum Mode {
    Sde,
    Ode,
}

#[derive(Clone, Copy, ValueEnum)]
enum Dir {
    Forward,
    Backward,
}

#[derive(Subcommand)]
enum Command {
    /// Train a drift pair. Config keys are given as `--key value`
    /// (e.g. `--ipf.L 4 --grid.N 10`), optionally after `--config FILE`.
    Train {
        /// Continue from the last completed phase in the run directory.
        #[arg(long)]
        resume: bool,
        #[arg(trailing_var_arg = true, allow_hyphen_values = true)]
        settings: Vec<String>,
    },
    /// Generate points from a trained run.
    Sample {
        #[arg(long)]
        run: PathBuf,
        #[arg(long, default_value_t = 1000)]
        count: usize,
        #[arg(long, value_enum, default_value_t = Mode::Sde)]
        mode: Mode,
        /// Output file; `.geojson` selects GeoJSON.
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// Train a bridge between `--dataset` and `--prior` and export frames.
    Interpolate {
        /// Frame times as fractions of T.
        #[arg(long, default_value = "0,0.25,0.5,0.75,1")]
        frames: String,
        #[arg(long, default_value_t = 2000)]
        count: usize,
        #[arg(trailing_var_arg = true, allow_hyphen_values = true)]
        settings: Vec<String>,
    },
    /// Per-point log-likelihoods via the probability-flow ODE.
    Likelihood {
        #[arg(long)]
        run: PathBuf,
        /// Points to score; defaults to the run's held-out set.
        #[arg(long)]
        dataset: Option<String>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Sample-quality report for a trained run.
    Eval {
        #[arg(long)]
        run: PathBuf,
        #[arg(long)]
        dataset: Option<String>,
        #[arg(long, default_value_t = 5000)]
        count: usize,
    },
    /// Raw geodesic random walks, driftless or with a run's drifts.
    Simulate {
        #[arg(long)]
        run: Option<PathBuf>,
        #[arg(long, value_enum, default_value_t = Dir::Forward)]
        direction: Dir,
        #[arg(long, default_value_t = 100)]
        paths: usize,
        #[arg(long)]
        out: PathBuf,
        #[arg(trailing_var_arg = true, allow_hyphen_values = true)]
        settings: Vec<String>,
    },
}

fn config(settings: &[String]) -> sphere_bridge::Result<RunConfig> {
    let mut c = RunConfig::default();
    c.apply_args(settings)?;
    Ok(c)
}

fn run(cli: Cli) -> sphere_bridge::Result<()> {
    match cli.command {
        Command::Train { resume, settings } => {
            let dir = cli::cmd_train(&config(&settings)?, resume)?;
            println!("{}", dir.display());
        }
        Command::Sample { run, count, mode, out, seed } => {
            let mode = match mode {
                Mode::Sde => SampleMode::Sde,
                Mode::Ode => SampleMode::Ode,
            };
            println!("{}", cli::cmd_sample(&run, count, mode, &out, seed)?.display());
        }
        Command::Interpolate { frames, count, settings } => {
            let fracs = if frames.is_empty() { DEFAULT_FRAMES.to_vec() } else { cli::parse_frames(&frames)? };
            let (dir, files) = cli::cmd_interpolate(&config(&settings)?, &fracs, count)?;
            println!("{}", dir.display());
            for f in files {
                println!("{}", f.display());
            }
        }
        Command::Likelihood { run, dataset, out } => {
            let (mean, se) = cli::cmd_likelihood(&run, dataset.as_deref(), &out)?;
            let shift = (4.0 * std::f64::consts::PI).ln();
            println!(
                "mean log-likelihood {mean:.5} ± {se:.5} nats (surface measure), {:.5} ± {se:.5} (uniform base)",
                mean + shift
            );
        }
        Command::Eval { run, dataset, count } => {
            let report = cli::cmd_eval(&run, dataset.as_deref(), count)?;
            println!("{}", serde_json::to_string_pretty(&report)?);
        }
        Command::Simulate { run, direction, paths, out, settings } => {
            let direction = match direction {
                Dir::Forward => Direction::Forward,
                Dir::Backward => Direction::Backward,
            };
            let path = cli::cmd_simulate(&config(&settings)?, run.as_deref(), direction, paths, &out)?;
            println!("{}", path.display());
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("{}", cli::error_line(&e));
            ExitCode::FAILURE
        }
    }
}
