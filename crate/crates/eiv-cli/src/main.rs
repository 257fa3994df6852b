mod commands;
mod config;
mod csv_in;
mod json_out;
mod manifest;
mod table;

use clap::{Parser, Subcommand};
use std::path::PathBuf;
use std::process::ExitCode;

/// Exit codes: 0 success, 2 input error, 3 numerical failure, 4 internal.
pub(crate) const EXIT_INPUT: u8 = 2;
pub(crate) const EXIT_NUMERICAL: u8 = 3;
pub(crate) const EXIT_INTERNAL: u8 = 4;

#[derive(Debug)]
pub(crate) struct CliError {
    pub code: u8,
    pub message: String,
}

impl CliError {
    pub fn input(message: impl Into<String>) -> Self {
        CliError {
            code: EXIT_INPUT,
            message: message.into(),
        }
    }

    pub fn numerical(message: impl Into<String>) -> Self {
        CliError {
            code: EXIT_NUMERICAL,
            message: message.into(),
        }
    }

    pub fn internal(message: impl Into<String>) -> Self {
        CliError {
            code: EXIT_INTERNAL,
            message: message.into(),
        }
    }
}

#[derive(Parser)]
#[command(
    name = "eiv",
    version,
    about = "Elliptical errors-in-variables regression: fitting, adjusted likelihood ratio tests and rejection-rate studies"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Fit the model to a CSV dataset by maximum likelihood.
    Fit {
        /// Input data (CSV: group,y1,...,yl,x).
        #[arg(long)]
        data: PathBuf,
        /// Model configuration (TOML).
        #[arg(long)]
        model: PathBuf,
        /// Output JSON path.
        #[arg(long)]
        out: PathBuf,
        /// Seed for deterministic restart jitter.
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// Test a point null hypothesis with LR, LR* and LR**.
    Test {
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        model: PathBuf,
        /// Null specification, e.g. "beta1@1=0,beta1@2=0".
        #[arg(long)]
        null: String,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// Run a Monte Carlo rejection-rate study from a study configuration.
    Simulate {
        /// Study configuration (TOML).
        #[arg(long)]
        config: PathBuf,
        /// Output JSON path; the aligned text table goes to stdout.
        #[arg(long)]
        out: PathBuf,
        /// Override the configured replication count.
        #[arg(long)]
        reps: Option<usize>,
        /// Override the configured master seed.
        #[arg(long)]
        seed: Option<u64>,
        /// Worker threads (default: EIV_THREADS or all cores).
        #[arg(long)]
        threads: Option<usize>,
    },
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Fit {
            data,
            model,
            out,
            seed,
        } => commands::cmd_fit(&data, &model, &out, seed),
        Command::Test {
            data,
            model,
            null,
            out,
            seed,
        } => commands::cmd_test(&data, &model, &null, &out, seed),
        Command::Simulate {
            config,
            out,
            reps,
            seed,
            threads,
        } => commands::cmd_simulate(&config, &out, reps, seed, threads),
    };
    match result {
        Ok(code) => ExitCode::from(code),
        Err(err) => {
            eprintln!("error: {}", err.message);
            ExitCode::from(err.code)
        }
    }
}
