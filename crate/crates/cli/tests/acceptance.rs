//! Acceptance suite: one PASS/FAIL line per criterion, nonzero exit on failure.

use std::process::ExitCode;

use thermovar_cli::verify::{run_all, VerifyOptions};

fn main() -> ExitCode {
    let outcomes = run_all(&VerifyOptions::default(), &|msg: &str| eprintln!("{msg}"), |o| println!("{}", o.line()));
    let failed = outcomes.iter().filter(|o| !o.passed).count();
    println!("acceptance: {} of {} criteria passed", outcomes.len() - failed, outcomes.len());
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
