//! `infgmres` command-line runner.
//!
//! Exit codes: 0 success, 2 non-convergence or failed checks, 1 error.

mod commands;
mod config;
mod experiments;

use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{Context, Result};
use clap::{Parser, Subcommand};

/// Number of worker threads for `sweep`; defaults to all cores.
const THREADS_ENV: &str = "INFGMRES_THREADS";

#[derive(Parser)]
#[command(name = "infgmres", version, about = "Inexact infinite GMRES for parameterized linear systems")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run one solve from a JSON run configuration.
    Solve {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Evaluate a saved solution at many parameter values.
    Sweep {
        #[arg(long)]
        solution: PathBuf,
        /// Comma-separated values or an inclusive range a:step:b.
        #[arg(long, allow_hyphen_values = true)]
        mu: String,
        #[arg(long)]
        out: PathBuf,
    },
    /// Run a packaged experiment and check its expected behaviour.
    Experiment {
        #[arg(long)]
        name: String,
        #[arg(long)]
        out: PathBuf,
    },
}

fn configure_threads() -> Result<()> {
    if let Ok(v) = std::env::var(THREADS_ENV) {
        let n: usize = v
            .trim()
            .parse()
            .with_context(|| format!("{THREADS_ENV} must be a positive integer, got '{v}'"))?;
        rayon::ThreadPoolBuilder::new().num_threads(n).build_global()?;
    }
    Ok(())
}

fn execute(cli: Cli) -> Result<bool> {
    match cli.command {
        Command::Solve { config, out } => {
            let converged = commands::solve(&config, &out)?;
            if !converged {
                eprintln!("did not converge; results written to {}", out.display());
            }
            Ok(converged)
        }
        Command::Sweep { solution, mu, out } => {
            configure_threads()?;
            let mus = commands::parse_mu_list(&mu)?;
            commands::sweep(&solution, &mus, &out)
        }
        Command::Experiment { name, out } => {
            let assertions = experiments::run_experiment(&name, &out)?;
            for a in &assertions {
                println!(
                    "{} {}: {:.3e} (limit {:.3e}) {}",
                    if a.passed { "PASS" } else { "FAIL" },
                    a.name,
                    a.value,
                    a.threshold,
                    a.detail
                );
            }
            Ok(assertions.iter().all(|a| a.passed))
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match execute(cli) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(2),
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(1)
        }
    }
}
