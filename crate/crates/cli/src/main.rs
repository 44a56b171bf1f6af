//! `kcate` command-line driver.
//!
//! Exit codes: 0 success, 1 runtime failure, 2 invalid input.

mod commands;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

#[derive(Parser, Debug)]
#[command(name = "kcate", version, about = "Two-stage KRR CATE estimation: simulations, fits and rate sweeps")]
struct Cli {
    /// Override the master seed from the config.
    #[arg(long, global = true)]
    seed: Option<u64>,

    /// Worker threads for replications (defaults to all cores).
    #[arg(long, global = true)]
    threads: Option<usize>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Run replicated synthetic experiments and write CSV/Markdown reports.
    Simulate {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Cross-fitted selection on a CSV dataset; writes CATE predictions.
    Fit {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Sweep sample sizes and fit the log-log slope of the test MSE.
    Rates {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let opts = commands::Overrides {
        seed: cli.seed,
        threads: cli.threads,
    };
    let result = match &cli.command {
        Command::Simulate { config, out } => commands::simulate(config, out, &opts),
        Command::Fit { config, data, out } => commands::fit(config, data, out, &opts),
        Command::Rates { config, out } => commands::rates(config, out, &opts),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
