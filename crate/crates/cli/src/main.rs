//! `idinit` command-line front end.
//!
//! Exit codes: 0 success, 1 verification failure, 2 usage or config error.

mod dump;
mod experiment;
mod verify;

use std::process::ExitCode;

use clap::{Parser, Subcommand};

#[derive(Parser)]
#[command(name = "idinit", version, about = "Identity-preserving initializers and their probes")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Build one initializer and write it as CSV, binary and a JSON sidecar.
    DumpInit(dump::DumpArgs),
    /// Run self-check suites and print a JSON verdict per check.
    Verify(verify::VerifyArgs),
    /// Run one named experiment and write its report.
    Experiment(experiment::ExperimentArgs),
}

pub const EXIT_FAILED: u8 = 1;
pub const EXIT_USAGE: u8 = 2;

/// Prints a line to stdout, ignoring a closed pipe.
pub fn emit(line: impl std::fmt::Display) {
    use std::io::Write;
    let _ = writeln!(std::io::stdout().lock(), "{line}");
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::DumpInit(args) => dump::run(args),
        Command::Verify(args) => verify::run(args),
        Command::Experiment(args) => experiment::run(args),
    };
    match result {
        Ok(code) => ExitCode::from(code),
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(EXIT_USAGE)
        }
    }
}
