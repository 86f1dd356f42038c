use std::process::ExitCode;

use clap::Parser;
use sinkhorn_cli::args::Cli;

fn main() -> ExitCode {
    let cli = Cli::parse();
    match sinkhorn_cli::run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            eprintln!("error: {err:#}");
            ExitCode::from(sinkhorn_cli::exit_code(&err) as u8)
        }
    }
}
