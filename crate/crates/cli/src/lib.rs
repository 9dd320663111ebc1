//! Command-line harness around `spikedistill-core`.
//!
//! Subcommands cover the full experiment pipeline: synthetic data generation,
//! baseline training, magnitude pruning, both distillation regimes,
//! evaluation, report rendering, and a one-shot suite runner. Every command
//! is deterministic given its flags: repeated invocations write byte-identical
//! JSON, CSV, and SVG artifacts.

use std::ffi::OsString;

pub mod args;
pub mod commands;
pub mod experiment;
pub mod svg;
pub mod table;

pub use args::{Cli, Command};
use spikedistill_core::Error;

/// Process exit code for a failed command: usage and validation problems are
/// 1, file format and I/O problems are 2, numeric failures are 3.
pub fn exit_code(err: &Error) -> i32 {
    match err {
        Error::Dimension(_) | Error::Parameter(_) | Error::Index(_) | Error::Config(_) => 1,
        Error::Format { .. } | Error::Io(_) | Error::Json(_) => 2,
        Error::Numeric(_) | Error::State(_) => 3,
    }
}

/// Parse `argv` and run the selected command, returning the process exit
/// code. Parse failures exit 1; `--help` and `--version` exit 0.
pub fn run<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    use clap::Parser;
    let cli = match Cli::try_parse_from(argv) {
        Ok(cli) => cli,
        Err(err) => {
            let code = if err.use_stderr() { 1 } else { 0 };
            let _ = err.print();
            return code;
        }
    };
    match commands::dispatch(&cli) {
        Ok(()) => 0,
        Err(err) => {
            eprintln!("error: {err}");
            exit_code(&err)
        }
    }
}
