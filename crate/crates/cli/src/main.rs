mod args;
mod commands;

use std::process::ExitCode;

use clap::Parser;

use args::{Cli, Command};

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match &cli.command {
        Command::Predict(a) => commands::predict(a, cli.format),
        Command::Simulate(a) => commands::simulate(a, cli.format, cli.jobs),
        Command::Compare(a) => commands::compare(a, cli.format, cli.jobs),
        Command::Sweep(a) => commands::sweep(a, cli.format, cli.jobs),
        Command::Transfer(a) => commands::transfer(a, cli.format),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
