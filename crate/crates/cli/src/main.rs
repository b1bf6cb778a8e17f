mod cache;
mod commands;
mod config;
mod output;

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use serde::Serialize;
use wolffkit::error::Error;

use crate::cache::Cache;
use crate::commands::{Ctx, Status};
use crate::config::{Invalid, RunConfig};

#[derive(Parser, Debug)]
#[command(name = "wolffkit", version, about = "Wolff-type potentials, embedding constants and minimal solutions")]
struct Cli {
    #[command(subcommand)]
    command: Command,

    /// JSON run configuration.
    #[arg(long, global = true)]
    config: Option<PathBuf>,

    /// Output directory; overrides `output_dir` of the config.
    #[arg(long, global = true)]
    out: Option<PathBuf>,

    /// Kappa table cache; overrides `cache_dir` of the config.
    #[arg(long, global = true)]
    cache: Option<PathBuf>,

    /// Worker threads of the parallel loops.
    #[arg(long, global = true)]
    threads: Option<usize>,

    /// Iteration tolerance of `solve`; overrides `task.tol`.
    #[arg(long, global = true)]
    tol: Option<f64>,

    /// Seed of the randomized verification checks.
    #[arg(long, global = true, default_value_t = 7)]
    seed: u64,
}

#[derive(Subcommand, Debug, Clone, PartialEq)]
enum Command {
    /// Wolff and Riesz potentials at `task.points`.
    Potential,
    /// Kappa brackets on a radius ladder.
    Kappa,
    /// Intrinsic potential and `M(x, t)` at `task.points`.
    Kpotential,
    /// Minimal solution by monotone iteration.
    Solve,
    /// The three existence and regularity criteria.
    Check,
    /// The divergent-series construction.
    Counterexample,
    /// Grid study of the gradient-form equation.
    Riccati,
    /// Frozen ratio-check family; exit code 4 when a check fails.
    Verify {
        #[arg(long)]
        suite: Option<String>,
    },
}

const EXIT_VALIDATION: u8 = 2;
const EXIT_NONEXISTENCE: u8 = 3;
const EXIT_CHECKS: u8 = 4;

#[derive(Serialize)]
struct ErrorReport<'a> {
    kind: &'a str,
    message: String,
    exit_code: u8,
}

fn classify(err: &anyhow::Error) -> (&'static str, u8) {
    if err.downcast_ref::<Invalid>().is_some() {
        return ("validation", EXIT_VALIDATION);
    }
    match err.downcast_ref::<Error>() {
        Some(Error::InvalidExponents(_) | Error::InvalidMeasure(_) | Error::InvalidArgument(_) | Error::NonRadialMeasure(_) | Error::AtomInEvaluationSet) => {
            ("validation", EXIT_VALIDATION)
        }
        Some(Error::NonexistenceDetected(_)) => ("nonexistence", EXIT_NONEXISTENCE),
        Some(
            Error::NonconvergentIteration { .. } | Error::NonconvergentLocalSolve(_) | Error::UnboundedIterates { .. } | Error::NoSubsolution { .. },
        ) => ("nonconvergence", EXIT_NONEXISTENCE),
        Some(Error::Io(_)) | None => ("runtime", 1),
    }
}

fn report_error(out: &Path, err: &anyhow::Error) -> u8 {
    let (kind, code) = classify(err);
    eprintln!("error: {err:#}");
    let rep = ErrorReport { kind, message: format!("{err:#}"), exit_code: code };
    if std::fs::create_dir_all(out).is_ok() {
        let _ = output::write_json(&out.join("error.json"), &rep);
    }
    code
}

fn run(cli: &Cli, cfg: &RunConfig, out: &Path) -> anyhow::Result<Status> {
    if let Some(n) = cli.threads {
        if n == 0 {
            anyhow::bail!(Invalid("--threads must be positive".into()));
        }
        wolffkit::parallel::set_threads(n);
    }
    if let Some(t) = cli.tol {
        if !(t > 0.0 && t < 1.0) {
            anyhow::bail!(Invalid("--tol must lie in (0, 1)".into()));
        }
    }
    std::fs::create_dir_all(out)?;
    let cache = match cli.cache.as_ref().or(cfg.cache_dir.as_ref()) {
        Some(dir) => Some(Cache::open(dir)?),
        None => None,
    };
    let ctx = Ctx { cfg, out, cache: cache.as_ref(), tol: cli.tol, seed: cli.seed };
    match &cli.command {
        Command::Potential => commands::potential(&ctx),
        Command::Kappa => commands::kappa(&ctx),
        Command::Kpotential => commands::kpotential(&ctx),
        Command::Solve => commands::solve(&ctx),
        Command::Check => commands::check(&ctx),
        Command::Counterexample => commands::counterexample(&ctx),
        Command::Riccati => commands::riccati(&ctx),
        Command::Verify { suite } => commands::verify(&ctx, suite.as_deref()),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let loaded = match &cli.config {
        Some(path) => RunConfig::load(path),
        None => Ok(RunConfig::empty()),
    };
    let default_out = PathBuf::from("out");
    let cfg = match loaded {
        Ok(cfg) => cfg,
        Err(e) => return ExitCode::from(report_error(cli.out.as_ref().unwrap_or(&default_out), &e)),
    };
    let out = cli.out.clone().or_else(|| cfg.output_dir.clone()).unwrap_or(default_out);
    match run(&cli, &cfg, &out) {
        Ok(Status::Ok) => ExitCode::SUCCESS,
        Ok(Status::ChecksFailed) => ExitCode::from(EXIT_CHECKS),
        Err(e) => ExitCode::from(report_error(&out, &e)),
    }
}
