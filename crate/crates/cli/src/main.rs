//! `stayers`: batch front-end for stayer effect estimation.

mod config;
mod error;
mod mc;
mod output;
mod run;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, ValueEnum};
use stayers::inference::SeMethod;

use config::{Overrides, RunConfig};
use error::CliError;
use run::Command;

#[derive(Debug, Clone, Copy, ValueEnum)]
enum SeArg {
    Sd,
    Iqr,
}

impl From<SeArg> for SeMethod {
    fn from(s: SeArg) -> Self {
        match s {
            SeArg::Sd => SeMethod::Sd,
            SeArg::Iqr => SeMethod::Iqr,
        }
    }
}

/// Nonparametric mean and quantile effects for stayers in two-period panels.
#[derive(Debug, Parser)]
#[command(name = "stayers", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
    /// TOML run configuration; flags below override it.
    #[arg(long, global = true, value_name = "FILE")]
    config: Option<PathBuf>,
    /// Seed for simulation and, unless set in the file, the bootstrap.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Bootstrap draws.
    #[arg(long, global = true, value_name = "B")]
    boot: Option<usize>,
    /// Band level: bands cover with probability 1 - alpha.
    #[arg(long, global = true)]
    alpha: Option<f64>,
    /// Pointwise scale estimator for bands.
    #[arg(long, global = true, value_enum)]
    se: Option<SeArg>,
    /// Output directory.
    #[arg(long, global = true, value_name = "DIR")]
    out: Option<PathBuf>,
    /// Long-format CSV input; replaces the configured input.
    #[arg(long, global = true, value_name = "CSV")]
    data: Option<PathBuf>,
    /// Monte Carlo replications.
    #[arg(long, short = 'R', global = true)]
    replications: Option<usize>,
}

fn execute(cli: Cli) -> Result<(), CliError> {
    let base = match &cli.config {
        Some(path) => RunConfig::load(path)?,
        None => RunConfig::default(),
    };
    let overrides = Overrides {
        seed: cli.seed,
        boot: cli.boot,
        alpha: cli.alpha,
        se: cli.se.map(Into::into),
        out: cli.out,
        data: cli.data,
        replications: cli.replications,
    };
    let cfg = base.resolve(&overrides)?;
    run::run(cli.command, &cfg)
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) if !e.use_stderr() => {
            let _ = e.print();
            return ExitCode::SUCCESS;
        }
        Err(e) => {
            let _ = e.print();
            eprintln!("{}", CliError::Config(e.kind().to_string()).report());
            return ExitCode::from(2);
        }
    };
    match execute(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("{}", e.report());
            ExitCode::from(e.exit_code())
        }
    }
}
