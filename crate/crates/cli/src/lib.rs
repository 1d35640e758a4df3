//! Experiment runner behind the `hypernet` binary: single runs, depth and
//! label-ratio sweeps, and CSV reports.

pub mod args;
pub mod commands;
pub mod report;
pub mod sweep;

use clap::error::ErrorKind;
use clap::{CommandFactory, Parser};

/// Parses `argv`, runs the command and returns the process exit code.
pub fn main_with_args<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match args::Cli::try_parse_from(argv) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => 0,
                _ => {
                    eprintln!("\n{}", args::Cli::command().render_usage());
                    commands::EXIT_USAGE
                }
            };
        }
    };
    match commands::execute(cli) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {}", e.message);
            e.code
        }
    }
}
