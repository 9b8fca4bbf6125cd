use std::process::ExitCode;

use clap::Parser;
use ghforest_cli::{run, Cli};

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("ghforest: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
