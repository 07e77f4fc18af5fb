//! `robinfield run <config>`, `robinfield list`, `robinfield validate <config>`.
//!
//! Exit status: 0 when every enabled assertion passes, 1 on an assertion
//! failure, 2 on a configuration error, 3 when a computation fails.

mod run;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use robinfield::config::{ExperimentConfig, KINDS};

#[derive(Parser)]
#[command(name = "robinfield", version, about = "Robin function and Λ-metric experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run the experiment described by a config file.
    Run { config: PathBuf },
    /// List experiment kinds and their parameters.
    List,
    /// Check a config and report collocation residuals for its domain.
    Validate { config: PathBuf },
}

pub const EXIT_ASSERTION: u8 = 1;
pub const EXIT_CONFIG: u8 = 2;
pub const EXIT_SOLVER: u8 = 3;

fn load(path: &PathBuf) -> Result<ExperimentConfig, u8> {
    let text = std::fs::read_to_string(path).map_err(|e| {
        eprintln!("error: cannot read {}: {e}", path.display());
        EXIT_CONFIG
    })?;
    ExperimentConfig::parse(&text).map_err(|e| {
        eprintln!("error: {}: {e}", path.display());
        EXIT_CONFIG
    })
}

fn threads(cfg: &ExperimentConfig) -> Result<usize, u8> {
    match std::env::var("RF_THREADS") {
        Ok(s) => match s.trim().parse::<usize>() {
            Ok(n) if n >= 1 => Ok(n),
            _ => {
                eprintln!("error: RF_THREADS must be a positive integer, got `{s}`");
                Err(EXIT_CONFIG)
            }
        },
        Err(_) => Ok(cfg.threads.unwrap_or_else(|| std::thread::available_parallelism().map_or(1, |n| n.get()))),
    }
}

fn execute(path: &PathBuf, validate_only: bool) -> Result<(), u8> {
    let mut cfg = load(path)?;
    let n = threads(&cfg)?;
    if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(n).build_global() {
        eprintln!("warning: thread pool already initialized: {e}");
    }
    if validate_only {
        cfg.experiment = robinfield::config::Experiment::Validate { probes: 4, poles: 3, radius: 0.5 };
    }
    match run::run(&cfg) {
        Ok(true) => Ok(()),
        Ok(false) => Err(EXIT_ASSERTION),
        Err(e) => {
            eprintln!("error: {e}");
            Err(EXIT_SOLVER)
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match &cli.command {
        Command::List => {
            for (kind, help) in KINDS {
                println!("{kind:<14} {help}");
            }
            Ok(())
        }
        Command::Run { config } => execute(config, false),
        Command::Validate { config } => execute(config, true),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(code) => ExitCode::from(code),
    }
}
