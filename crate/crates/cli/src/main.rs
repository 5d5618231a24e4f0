// `!(x > 0.0)` is used on purpose so NaN fails validation.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

mod commands;
mod config;
mod error;
mod output;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use crate::config::{Fields, Requirements, SEED_ENV};
use crate::error::{CliError, Result};

/// Divergence-based hypothesis tests: calibration, exact and simulated
/// errors, second-order predictions and optimizer checks.
#[derive(Debug, Parser)]
#[command(name = "divtest", version)]
struct Cli {
    /// TOML experiment config; flags override its fields.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Cap on worker threads.
    #[arg(long, global = true)]
    threads: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Exact and asymptotic thresholds per n.
    Calibrate(Fields),
    /// Type-I/type-II errors per n (exact and/or Monte Carlo).
    Errors(Fields),
    /// First- and second-order predictions of -ln(beta).
    Predict(Fields),
    /// Exact -ln(beta) against the second-order law; exit 1 on FAIL.
    VerifyAsymptotics(Fields),
    /// sqrt(n)-scaled distance between the exact null CDF and chi-squared.
    BerryEsseen(Fields),
    /// KKT minimizer, brute-force oracle and rounding checks; exit 1 on FAIL.
    OptimizerCheck(Fields),
    /// Predictions, exact errors and Monte Carlo estimates per n.
    Sweep(Fields),
}

type Runner = fn(&config::Experiment) -> Result<output::Report>;

fn run(cli: Cli) -> Result<bool> {
    if let Some(t) = cli.threads {
        if t == 0 {
            return Err(CliError::config("threads", "must be >= 1"));
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(t)
            .build_global()
            .map_err(|e| CliError::config("threads", e.to_string()))?;
    }
    let (flags, req, f): (Fields, Requirements, Runner) = match cli.command {
        Command::Calibrate(x) => (
            x,
            Requirements {
                alt: false,
                grid: true,
                min_grid: 1,
            },
            commands::calibrate,
        ),
        Command::Errors(x) => (
            x,
            Requirements {
                alt: true,
                grid: true,
                min_grid: 1,
            },
            commands::errors,
        ),
        Command::Predict(x) => (
            x,
            Requirements {
                alt: true,
                grid: true,
                min_grid: 1,
            },
            commands::predict,
        ),
        Command::VerifyAsymptotics(x) => (
            x,
            Requirements {
                alt: true,
                grid: true,
                min_grid: 4,
            },
            commands::verify_asymptotics,
        ),
        Command::BerryEsseen(x) => (
            x,
            Requirements {
                alt: false,
                grid: true,
                min_grid: 1,
            },
            commands::berry_esseen,
        ),
        Command::OptimizerCheck(x) => (
            x,
            Requirements {
                alt: true,
                grid: false,
                min_grid: 0,
            },
            commands::optimizer_check,
        ),
        Command::Sweep(x) => (
            x,
            Requirements {
                alt: true,
                grid: true,
                min_grid: 1,
            },
            commands::sweep,
        ),
    };
    let file = match &cli.config {
        Some(p) => config::load_file(p)?,
        None => Fields::default(),
    };
    let fields = Fields::merged(flags, file);
    let exp = config::resolve(fields, std::env::var(SEED_ENV).ok(), cli.threads, &req)?;
    let report = f(&exp)?;
    output::emit(&report, &exp.resolved)?;
    Ok(report.pass.unwrap_or(true))
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
