//! Experiment runner: parses configs, runs one experiment kind, and writes
//! a JSON payload, a result envelope and plot-ready CSV tables.

mod commands;
pub mod error;
pub mod experiment;
pub mod output;

use std::ffi::OsString;
use std::process::ExitCode;

use clap::Parser;

pub use commands::{default_pa_grid, derive_seed, loglog_slope, CERTIFY_MARGIN, EXPONENT_TOLERANCE};
pub use error::{CliError, CliResult};
pub use experiment::{run, Args, ExperimentSpec, Family, Kind, Outcome, RunReport};

/// Entry point shared by the binary and the tests.
pub fn main_with<I, T>(args: I) -> ExitCode
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let args = match Args::try_parse_from(args) {
        Ok(a) => a,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 2 } else { 0 });
        }
    };
    let spec = ExperimentSpec::from(args);
    match run(&spec) {
        Ok(r) => {
            println!("{}: {}", spec.kind.name(), r.outcome.summary);
            println!("payload: {}", r.payload_path.display());
            ExitCode::from(r.outcome.exit_code)
        }
        Err(e) => {
            eprintln!("pmfs: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
