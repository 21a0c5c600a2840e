use std::process::ExitCode;

use clap::Parser;
use pcdlqr_cli::commands::{run, Cli};
use pcdlqr_cli::CliError;

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(line) => {
            println!("{line}");
            ExitCode::SUCCESS
        }
        Err(e) => {
            match &e {
                CliError::NoCertificate(msg) => println!("{msg}"),
                other => eprintln!("error: {other}"),
            }
            ExitCode::from(e.exit_code())
        }
    }
}
