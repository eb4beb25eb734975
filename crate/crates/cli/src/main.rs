use std::process::ExitCode;

use clap::Parser;
use shine_cli::Cli;

fn main() -> ExitCode {
    let cli = Cli::parse();
    match shine_cli::run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            e.to_exit_code()
        }
    }
}
