//! `dpslice`: generate data, run chains, benchmark samplers, check the
//! overhead bounds and compare samplers against the exact posterior.
//!
//! Exit status is 0 when every requested check passes, 1 when a check fails
//! or a run is aborted as infeasible, and 2 on a usage or configuration
//! error.

mod benchmark;
mod config;
mod generate;
mod oracle;
mod output;
mod run;
mod verify;

use std::fmt;
use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{Context, Result};
use clap::{Parser, Subcommand};

use config::{Config, Preset};

#[derive(Debug, Parser)]
#[command(name = "dpslice", version, about = "Samplers for Dirichlet-process mixtures of Normals")]
struct Cli {
    /// JSON experiment configuration.
    #[arg(long, global = true, value_name = "PATH")]
    config: Option<PathBuf>,
    /// Experiment seed (overrides the config).
    #[arg(long, global = true, value_name = "U64")]
    seed: Option<u64>,
    /// Output directory (overrides the config).
    #[arg(long, global = true, value_name = "DIR")]
    out: Option<PathBuf>,
    /// Worker threads for replicate and grid parallelism.
    #[arg(long, global = true, value_name = "N")]
    threads: Option<usize>,
    /// Iteration and replicate budget (overrides the config).
    #[arg(long, global = true, value_enum)]
    preset: Option<Preset>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Write a synthetic dataset and its JSON sidecar.
    Generate,
    /// Run one chain and write its trace, snapshots and summary.
    Run,
    /// Time every (sampler, n, seed) cell of a grid.
    Benchmark,
    /// Monte Carlo checks of the slice overhead bounds.
    Verify,
    /// Compare samplers against the enumerated partition posterior.
    Oracle,
}

/// Resolved global settings shared by every command.
pub struct Ctx {
    pub seed: u64,
    pub out: PathBuf,
    pub preset: Preset,
    pub config: Config,
}

/// Marks an error as a usage or configuration problem (exit status 2).
#[derive(Debug)]
pub struct Usage;

impl fmt::Display for Usage {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str("invalid configuration")
    }
}

/// Tags `result` as a usage error.
pub fn usage<T>(result: Result<T>) -> Result<T> {
    result.context(Usage)
}

fn context(cli: &Cli) -> Result<Ctx> {
    let config = match &cli.config {
        Some(path) => Config::read(path)?,
        None => Config::default(),
    };
    Ok(Ctx {
        seed: cli.seed.or(config.seed).unwrap_or(1),
        out: cli.out.clone().or_else(|| config.out.clone()).unwrap_or_else(|| PathBuf::from("out")),
        preset: cli.preset.or(config.preset).unwrap_or_default(),
        config,
    })
}

fn execute(cli: &Cli) -> Result<bool> {
    if let Some(threads) = cli.threads {
        usage(
            rayon::ThreadPoolBuilder::new()
                .num_threads(threads)
                .build_global()
                .context("configuring the thread pool"),
        )?;
    }
    let ctx = usage(context(cli))?;
    match cli.command {
        Command::Generate => generate::execute(&ctx),
        Command::Run => run::execute(&ctx),
        Command::Benchmark => benchmark::execute(&ctx),
        Command::Verify => verify::execute(&ctx),
        Command::Oracle => oracle::execute(&ctx),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match execute(&cli) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(e) => {
            eprintln!("error: {e:#}");
            if e.downcast_ref::<Usage>().is_some() {
                ExitCode::from(2)
            } else {
                ExitCode::from(1)
            }
        }
    }
}
