//! Command-line front end: INI configs in, CSV/JSON artifacts and gnuplot
//! scripts out.

pub mod commands;
pub mod config;
pub mod error;
pub mod output;
pub mod plot;

use std::path::PathBuf;

use clap::{Parser, Subcommand};

pub use error::{CliError, CliResult};

#[derive(Debug, Parser)]
#[command(name = "lagrange-ot", version, about = "Optimal transport with Lagrangian action costs on flat tori")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, clap::Args)]
pub struct CommonArgs {
    /// INI run configuration.
    #[arg(long)]
    pub config: PathBuf,
    /// Output directory, overriding `[output] directory`.
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Seed, overriding `[solver] seed`.
    #[arg(long)]
    pub seed: Option<u64>,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Cost matrix between the configured measures or grid nodes.
    Cost(CommonArgs),
    /// Kantorovich solution, value functions, interpolation and certificate.
    Transport(CommonArgs),
    /// Mather's alpha, the Mather measure and its diagnostics.
    Mather(CommonArgs),
    /// gnuplot scripts for the runs in the output directory.
    Plot(CommonArgs),
}

fn load(args: &CommonArgs) -> CliResult<config::RunConfig> {
    let mut cfg = config::RunConfig::load(&args.config)?;
    if let Some(out) = &args.out {
        cfg.output.directory = out.clone();
    }
    if let Some(seed) = args.seed {
        cfg.solver.seed = seed;
    }
    Ok(cfg)
}

/// Runs one command and returns a one-line summary.
pub fn run(cli: &Cli) -> CliResult<String> {
    match &cli.command {
        Command::Cost(a) => {
            let stats = commands::cmd_cost(&load(a)?)?;
            Ok(format!("cost: cache hits {} misses {}", stats.hits, stats.misses))
        }
        Command::Transport(a) => {
            let c = commands::cmd_transport(&load(a)?)?;
            Ok(format!("transport: primal {} duality gap {:e}", c.primal, c.duality_gap))
        }
        Command::Mather(a) => {
            let r = commands::cmd_mather(&load(a)?)?;
            Ok(format!("mather: alpha {}", r.alpha))
        }
        Command::Plot(a) => {
            let s = plot::cmd_plot(&load(a)?)?;
            Ok(format!("plot: {} files", s.files.len()))
        }
    }
}
