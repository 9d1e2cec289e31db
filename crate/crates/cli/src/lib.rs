//! Command-line driver for `entsamp-core`: config loading, a rayon
//! executor, result files and the subcommands.

pub mod cli;
pub mod commands;
pub mod config;
pub mod error;
pub mod exec;
pub mod output;
pub mod verify;

use std::ffi::OsString;

use clap::Parser;

pub use error::CliError;

/// Parses `args` (including the program name), runs the subcommand and
/// returns the process exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let parsed = match cli::Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { 2 } else { 0 };
        }
    };
    match commands::dispatch(&parsed) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("entsamp: {e}");
            e.exit_code()
        }
    }
}
