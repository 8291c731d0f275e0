//! Command line front end: runs scenario files against the built-in
//! constrained systems and writes trajectories and check reports.

pub mod commands;
pub mod config;
pub mod output;

use std::path::PathBuf;

use clap::{Parser, Subcommand};

pub use commands::{Outcome, RunOptions};

#[derive(Debug, Parser)]
#[command(
    name = "cdyn",
    version,
    about = "Simulate and verify constrained mechanical systems"
)]
pub struct Cli {
    /// Directory for output files (overrides output.dir in the config).
    #[arg(long, global = true)]
    pub output_dir: Option<PathBuf>,

    /// Seed for random sampling (overrides the config).
    #[arg(long, global = true)]
    pub seed: Option<u64>,

    /// Worker threads when several configs are given.
    #[arg(long, global = true, default_value_t = 1)]
    pub jobs: usize,

    /// Record wall-clock time in summaries. Outputs are then no longer
    /// byte-for-byte reproducible.
    #[arg(long, global = true)]
    pub wall_clock: bool,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Integrate each scenario; writes a trajectory CSV and a summary JSON.
    Simulate {
        #[arg(required = true)]
        configs: Vec<PathBuf>,
    },
    /// Run each scenario's check suite; writes a report JSON.
    Verify {
        #[arg(required = true)]
        configs: Vec<PathBuf>,
    },
    /// Print built-in systems, checks and observers.
    List {
        #[arg(long)]
        json: bool,
    },
}

pub fn run(cli: &Cli) -> Outcome {
    let opts = RunOptions {
        output_dir: cli.output_dir.as_deref(),
        seed: cli.seed,
        wall_clock: cli.wall_clock,
    };
    match &cli.command {
        Command::Simulate { configs } => {
            commands::fan_out(configs, cli.jobs, |p| commands::simulate(p, &opts))
        }
        Command::Verify { configs } => commands::fan_out(configs, cli.jobs, |p| commands::verify(p, &opts)),
        Command::List { json } => commands::list(*json),
    }
}
