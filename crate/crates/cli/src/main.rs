use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use thermovar_cli::run::{run, RunOptions};
use thermovar_cli::study::{format_table, study, StudyOptions};
use thermovar_cli::verify::{run_all, VerifyOptions};
use thermovar_cli::{load_scenario, CliError, Scenario};

/// Incremental variational thermomechanics: scenario runs, studies and verification
#[derive(Parser)]
#[command(name = "thermovar", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Common {
    /// Scenario file (TOML)
    config: PathBuf,
    /// Output directory (overrides output.dir)
    #[arg(long)]
    out: Option<PathBuf>,
    /// Seed of the random initial condition
    #[arg(long)]
    seed: Option<u64>,
    /// Byte-identical artifacts across runs (no timing data)
    #[arg(long)]
    reproducible: bool,
}

#[derive(Subcommand)]
enum Command {
    /// Run one scenario
    Run(Common),
    /// Run the parameter series of the scenario's study block
    Study {
        #[command(flatten)]
        common: Common,
        /// Cases run concurrently
        #[arg(long, default_value_t = 1)]
        jobs: usize,
    },
    /// Run the oracle suite and print one PASS/FAIL line per criterion
    Verify {
        #[arg(long)]
        seed: Option<u64>,
        /// Leave out the finite element shear-band study
        #[arg(long)]
        skip_study: bool,
    },
}

fn prepare(common: &Common) -> Result<(Scenario, PathBuf), CliError> {
    let mut scenario = load_scenario(&common.config)?;
    if let Some(seed) = common.seed {
        scenario.set_seed(seed);
    }
    let out = common.out.clone().unwrap_or_else(|| Path::new(&scenario.output().dir).to_path_buf());
    Ok((scenario, out))
}

fn execute(cli: Cli) -> Result<bool, CliError> {
    match cli.command {
        Command::Run(common) => {
            let (scenario, out) = prepare(&common)?;
            let summary = run(&scenario, &out, &RunOptions { reproducible: common.reproducible })?;
            println!("{}", serde_json::to_string_pretty(&summary["metrics"])?);
            eprintln!("artifacts written to {}", out.display());
            Ok(true)
        }
        Command::Study { common, jobs } => {
            let (scenario, out) = prepare(&common)?;
            let opts = StudyOptions { jobs, reproducible: common.reproducible };
            let report = study(&scenario, &out, &opts, &|msg: &str| eprintln!("{msg}"))?;
            println!("{}", format_table(&report, scenario.model()));
            let failed = report.failures();
            if failed > 0 {
                return Err(CliError::ChecksFailed(failed));
            }
            Ok(true)
        }
        Command::Verify { seed, skip_study } => {
            let mut opts = VerifyOptions { skip_study, ..VerifyOptions::default() };
            if let Some(s) = seed {
                opts.seed = s;
            }
            let outcomes = run_all(&opts, &|msg: &str| eprintln!("{msg}"), |o| println!("{}", o.line()));
            Ok(outcomes.iter().all(|o| o.passed))
        }
    }
}

fn main() -> ExitCode {
    match execute(Cli::parse()) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::FAILURE,
        Err(e @ CliError::Config { .. }) => {
            eprintln!("error: {e}");
            ExitCode::from(2)
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}
