//! The `doseopt` command-line tool. Each subcommand lives in its own
//! module; [`execute`] dispatches and maps failures to exit codes.

pub mod args;
pub mod chain_cmd;
pub mod common;
pub mod config;
pub mod design_cmd;
pub mod error;
pub mod manifest;
pub mod reference;
pub mod reproduce_cmd;
pub mod rows;
pub mod simulate_cmd;

use args::{Cli, Command};
use chain_cmd::Report;
use error::{CliError, EXIT_DIFF, EXIT_OK};

/// Runs a parsed command. Returns the stdout text and the exit code.
pub fn execute(cli: &Cli) -> Result<(String, i32), CliError> {
    let w = cli.workers;
    if w == Some(0) {
        return Err(CliError::usage("--workers must be at least 1"));
    }
    let text = match &cli.command {
        Command::Design(a) => design_cmd::run(a, w)?,
        Command::Bias(a) => chain_cmd::run(a, Report::Bias)?,
        Command::Type1(a) => chain_cmd::run(a, Report::Type1)?,
        Command::Simulate(a) => simulate_cmd::run(a, w)?,
        Command::Reproduce(a) => {
            let (text, ok) = reproduce_cmd::run(a, w)?;
            let code = if a.strict && !ok { EXIT_DIFF } else { EXIT_OK };
            return Ok((text, code));
        }
    };
    Ok((text, EXIT_OK))
}
