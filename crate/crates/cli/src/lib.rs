//! Command-line runner for the bi-level and equilibrium-model experiments.
//!
//! Every command writes versioned CSV (first line `schema=1`) or JSON traces and
//! maps failures to stable exit codes: 2 configuration, 3 data, 4 numerical.

pub mod args;
mod commands;
pub mod error;
pub mod output;

pub use args::{Cli, Command};
pub use commands::{cmd_bilevel, cmd_deq_toy, cmd_opa_quality, cmd_spectral};
pub use error::{CliError, CliResult};

pub fn run(cli: &Cli) -> CliResult<()> {
    match &cli.command {
        Command::Bilevel(a) => cmd_bilevel(a),
        Command::OpaQuality(a) => cmd_opa_quality(a),
        Command::DeqToy(a) => cmd_deq_toy(a),
        Command::Spectral(a) => cmd_spectral(a),
    }
}
