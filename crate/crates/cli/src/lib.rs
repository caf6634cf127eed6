//! Front end for the `anisokepler` binary.
//!
//! A run merges a JSON config with command-line flags, dispatches to one
//! subcommand, writes its artifacts atomically to the output directory and
//! maps the result to an exit status: 0 when the run is accepted, 2 when a
//! solver fails or a result is rejected, 1 for bad input.

pub mod args;
mod commands;
pub mod config;
pub mod error;
pub mod output;

use std::ffi::OsString;

use clap::error::ErrorKind;
use clap::Parser;

use args::{Cli, Command};
use config::RunConfig;
use error::{CliError, CliResult};
use output::Artifacts;

/// Name of the human-readable summary written by every subcommand.
pub const SUMMARY_FILE: &str = "summary.txt";

/// What a subcommand hands back to the dispatcher.
pub(crate) struct Outcome {
    pub artifacts: Artifacts,
    /// Six-significant-digit text, also printed to stdout.
    pub summary: String,
    /// Set when the computation finished but did not pass its checks.
    pub rejected: Option<String>,
}

/// Runs the CLI on `argv` (including the program name) and returns the
/// exit status.
pub fn run<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion | ErrorKind::DisplayHelpOnMissingArgumentOrSubcommand => 0,
                _ => 1,
            };
        }
    };
    match execute(&cli) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}

fn execute(cli: &Cli) -> CliResult<()> {
    let mut cfg = match &cli.config {
        Some(path) => RunConfig::load(path)?,
        None => RunConfig::default(),
    };
    cli.apply(&mut cfg);
    let outcome = match &cli.command {
        Command::Potential(_) => commands::potential::run(&cfg),
        Command::Integrate(_) => commands::integrate::run(&cfg),
        Command::Minimize(_) => commands::minimize::run(&cfg),
        Command::Hyperbolic(_) => commands::scatter::hyperbolic(&cfg),
        Command::Bihyperbolic(_) => commands::scatter::bihyperbolic(&cfg),
        Command::CollisionTest(_) => commands::collision::run(&cfg),
        Command::Verify(_) => commands::verify::run(&cfg),
    }?;
    let Outcome {
        mut artifacts,
        summary,
        rejected,
    } = outcome;
    artifacts.add(SUMMARY_FILE, summary.clone());
    let dir = cfg.output_dir();
    artifacts.write_all(&dir)?;
    print!("{summary}");
    match rejected {
        Some(why) => Err(CliError::Rejected(why)),
        None => Ok(()),
    }
}
