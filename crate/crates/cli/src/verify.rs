use anyhow::{bail, Result};
use clap::Args;
use idinit::verify::{run_suite, Fault, Suite};

use crate::EXIT_FAILED;

#[derive(Args)]
pub struct VerifyArgs {
    /// all, initializers, gradients or isometry.
    #[arg(default_value = "all")]
    suite: String,
    /// Print the suites and their checks without running them.
    #[arg(long)]
    list: bool,
    /// Run with a deliberate defect, to confirm the suites catch it.
    #[arg(long, hide = true)]
    inject_fault: Option<Fault>,
}

pub fn run(args: VerifyArgs) -> Result<u8> {
    let suites: Vec<Suite> = match args.suite.as_str() {
        "all" => Suite::ALL.to_vec(),
        s => match s.parse() {
            Ok(suite) => vec![suite],
            Err(_) => bail!("unknown suite '{s}' (all, initializers, gradients, isometry)"),
        },
    };
    if args.list {
        for suite in suites {
            for check in suite.checks() {
                crate::emit(format!("{}/{check}", suite.name()));
            }
        }
        return Ok(0);
    }
    let mut failed = 0;
    for suite in suites {
        for v in run_suite(suite, args.inject_fault) {
            failed += usize::from(!v.passed);
            crate::emit(serde_json::to_string(&v)?);
        }
    }
    if failed > 0 {
        eprintln!("{failed} check(s) failed");
        return Ok(EXIT_FAILED);
    }
    Ok(0)
}
