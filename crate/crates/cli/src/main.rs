//! `daxt`: values interceptions and tackles by the expected threat of the
//! move they prevented, from SPADL events or a synthetic league.

mod config;
mod error;
mod rundir;
mod stages;

use std::process::ExitCode;

use clap::{Parser, Subcommand};

use config::{Flags, RunConfig};
use error::CliError;
use stages::Ctx;

#[derive(Debug, Parser)]
#[command(name = "daxt", version, about = "Defensive action expected threat pipeline")]
struct Cli {
    #[command(subcommand)]
    command: Command,
    #[command(flatten)]
    flags: Flags,
}

#[derive(Debug, Clone, Copy, Subcommand)]
enum Command {
    /// Parse a SPADL CSV into the run directory
    Ingest,
    /// Generate a seeded synthetic league with positions and market values
    Synth,
    /// Fit the grid model and solve the xT surface
    Xt,
    /// Build the training, interception and tackle tables
    Datasets,
    /// Train the network and save the model
    Train,
    /// Value defensive actions and aggregate per player
    Value,
    /// Compute defender scores, rankings and the market-value correlation
    Score,
    /// Run the statistical battery on the validation split
    Validate,
    /// Write pitch and market-value SVG figures
    Render,
    /// Compare window lengths a = 1, 2, 3
    SweepA,
    /// Every stage in order, from --input or synthetic data
    RunAll,
}

fn run(cli: &Cli) -> Result<(), CliError> {
    let ctx = Ctx::new(RunConfig::resolve(&cli.flags)?)?;
    match cli.command {
        Command::Ingest => stages::ingest(&ctx),
        Command::Synth => stages::synth(&ctx),
        Command::Xt => stages::xt(&ctx),
        Command::Datasets => stages::datasets(&ctx),
        Command::Train => stages::train(&ctx),
        Command::Value => stages::value(&ctx),
        Command::Score => stages::score(&ctx),
        Command::Validate => stages::validate(&ctx),
        Command::Render => stages::render(&ctx),
        Command::SweepA => stages::sweep_a(&ctx),
        Command::RunAll => stages::run_all(&ctx),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
