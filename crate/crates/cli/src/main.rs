//! `loopshape`: run the data-driven loop-shaping pipeline from a JSON
//! configuration and write plot-ready artifacts.
//!
//! Exit codes: 0 success, 2 a design spec failed, 3 numerical failure,
//! 4 bad configuration or usage.

mod artifacts;
mod commands;
mod config;

use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{anyhow, Result};
use clap::{ArgAction, Parser, Subcommand};

use crate::commands::{Command as Cmd, Outcome};

#[derive(Parser)]
#[command(
    name = "loopshape",
    version,
    about = "Data-driven loop shaping from plant trials"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,

    /// Pipeline configuration (JSON).
    #[arg(long, global = true, value_name = "PATH")]
    config: Option<PathBuf>,

    /// Output directory; overrides the config's `out`.
    #[arg(long, global = true, value_name = "DIR")]
    out: Option<PathBuf>,

    /// Reference length N; also sets the inverse window to N/2 per side.
    #[arg(long, global = true, value_name = "N")]
    horizon: Option<usize>,

    /// Assert that no random numbers are used. Takes no value.
    #[arg(long, global = true, action = ArgAction::SetTrue)]
    seedless: bool,
}

#[derive(Subcommand, Clone, Copy)]
enum Command {
    /// Kick the plant with an impulse and report its relative order.
    Probe,
    /// Learn the two-sided FIR inverse of the plant.
    LearnInverse,
    /// Learn the FIR controller for the desired loop gain.
    Shape,
    /// Shape, then reduce the controller by balanced truncation.
    Reduce,
    /// Shape, reduce, and check the closed loops against the spec.
    Validate,
    /// Every stage in order, writing all artifacts.
    Full,
}

impl From<Command> for Cmd {
    fn from(c: Command) -> Self {
        match c {
            Command::Probe => Cmd::Probe,
            Command::LearnInverse => Cmd::LearnInverse,
            Command::Shape => Cmd::Shape,
            Command::Reduce => Cmd::Reduce,
            Command::Validate => Cmd::Validate,
            Command::Full => Cmd::Full,
        }
    }
}

fn exit_code(e: &anyhow::Error) -> u8 {
    for cause in e.chain() {
        if let Some(le) = cause.downcast_ref::<loopshape::Error>() {
            return if le.is_numerical() { 3 } else { 4 };
        }
    }
    4
}

fn run(cli: Cli) -> Result<Outcome> {
    let path = cli
        .config
        .ok_or_else(|| anyhow!("--config <PATH> is required"))?;
    commands::execute(
        cli.command.into(),
        &commands::Invocation {
            config_path: path,
            out: cli.out,
            horizon: cli.horizon,
            seedless: cli.seedless,
        },
    )
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 4 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match run(cli) {
        Ok(Outcome::Done) => ExitCode::SUCCESS,
        Ok(Outcome::SpecFailed) => ExitCode::from(2),
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(exit_code(&e))
        }
    }
}
