mod args;
mod commands;
mod config;
mod error;
mod model;
mod output;

use std::process::ExitCode;

use clap::Parser;

fn main() -> ExitCode {
    let argv = match config::splice(std::env::args_os().collect()) {
        Ok(a) => a,
        Err(e) => {
            eprintln!("opd: {e}");
            return ExitCode::from(e.exit_code());
        }
    };
    let cli = match args::Cli::try_parse_from(argv) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(2) } else { ExitCode::SUCCESS };
        }
    };
    match commands::run(cli.command) {
        Ok(()) | Err(error::CliError::Closed) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("opd: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
