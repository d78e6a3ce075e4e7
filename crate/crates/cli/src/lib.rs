//! Configuration, file formats and subcommands behind the `lindblad-riemann`
//! binary.

pub mod archive;
pub mod commands;
pub mod config;
pub mod error;
pub mod output;

use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};

pub use config::{RunConfig, Settings};
pub use error::CliError;

#[derive(Parser, Debug)]
#[command(name = "lindblad-riemann", version, about = "Riemannian compression of Lindblad splitting layers")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Args, Debug, Clone)]
pub struct CommandArgs {
    /// key = value settings file; flags take precedence
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[command(flatten)]
    pub settings: Settings,
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// Optimize one layer ansatz and save the isometries
    Optimize(CommandArgs),
    /// Average error of Trotter and optimized schemes per step count
    Benchmark(CommandArgs),
    /// Choi ranks before and after optimization, and of Trotter products
    Ranks(CommandArgs),
    /// Reuse isometries optimized on a small ring on larger rings
    Embed(CommandArgs),
    /// Compare metric and tangent-direction choices
    Metrics(CommandArgs),
    /// Normalized cost trajectories per step count
    Converge(CommandArgs),
}

/// Runs a parsed command and returns the files it wrote.
pub fn run(cmd: Command) -> Result<Vec<PathBuf>, CliError> {
    let (args, which) = match cmd {
        Command::Optimize(a) => (a, 0),
        Command::Benchmark(a) => (a, 1),
        Command::Ranks(a) => (a, 2),
        Command::Embed(a) => (a, 3),
        Command::Metrics(a) => (a, 4),
        Command::Converge(a) => (a, 5),
    };
    let cfg = RunConfig::resolve(args.settings, args.config.as_deref())?;
    match which {
        0 => commands::optimize(&cfg).map(|(_, paths)| paths),
        1 => commands::benchmark(&cfg),
        2 => commands::ranks(&cfg),
        3 => commands::embed(&cfg),
        4 => commands::metrics(&cfg),
        _ => commands::converge(&cfg),
    }
}

/// Worker count from `LINDBLAD_RIEMANN_THREADS`, if set.
pub fn thread_cap(value: Option<&str>) -> Result<Option<usize>, CliError> {
    match value {
        None => Ok(None),
        Some(v) => match v.trim().parse::<usize>() {
            Ok(n) if n > 0 => Ok(Some(n)),
            _ => Err(CliError::Config(format!(
                "LINDBLAD_RIEMANN_THREADS: expected a positive integer, got {v:?}"
            ))),
        },
    }
}
