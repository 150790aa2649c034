use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::Context;
use arbiter_service::config::ServiceConfig;
use arbiter_service::runner::{run, RunOptions};
use arbiter_service::scenario::load_scenario;
use clap::{Parser, Subcommand};

#[derive(Parser)]
#[command(name = "arbiter", version, about = "Resource arbitration for network slices")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Arbitrate a scenario and print its allocation report.
    Run {
        scenario: PathBuf,
        /// Overrides the scenario's seed.
        #[arg(long)]
        seed: Option<u64>,
        /// Write the report here instead of stdout.
        #[arg(long)]
        report: Option<PathBuf>,
        /// Include the wall-clock time of the arbitration step.
        #[arg(long)]
        timings: bool,
    },
    /// Check a scenario file without running it.
    Validate { scenario: PathBuf },
    /// Serve the HTTP API.
    Serve {
        #[arg(long)]
        config: Option<PathBuf>,
    },
}

fn main() -> ExitCode {
    tracing_subscriber::fmt()
        .with_env_filter(
            tracing_subscriber::EnvFilter::try_from_default_env().unwrap_or_else(|_| "info".into()),
        )
        .with_writer(std::io::stderr)
        .init();
    match execute(Cli::parse()) {
        Ok(code) => code,
        Err(err) => {
            eprintln!("error: {err:#}");
            ExitCode::from(2)
        }
    }
}

fn execute(cli: Cli) -> anyhow::Result<ExitCode> {
    match cli.command {
        Command::Run {
            scenario,
            seed,
            report,
            timings,
        } => {
            let parsed = load_scenario(&scenario)?;
            let out = run(&parsed, &RunOptions { seed, timings })?;
            let text = out.report.to_json();
            match report {
                Some(path) => std::fs::write(&path, &text)
                    .with_context(|| format!("cannot write report to {}", path.display()))?,
                None => print!("{text}"),
            }
            if out.mismatches.is_empty() {
                return Ok(ExitCode::SUCCESS);
            }
            eprintln!("{} expected outcome(s) not met:", out.mismatches.len());
            for m in &out.mismatches {
                eprintln!("{m}");
            }
            Ok(ExitCode::from(1))
        }
        Command::Validate { scenario } => {
            let parsed = load_scenario(&scenario)?;
            println!(
                "{}: {} vertical(s), {} request(s), {} expectation(s)",
                scenario.display(),
                parsed.verticals.len(),
                parsed.requests.len(),
                parsed.expected.len()
            );
            Ok(ExitCode::SUCCESS)
        }
        Command::Serve { config } => {
            let config = ServiceConfig::from_env(config.as_deref())?;
            tokio::runtime::Runtime::new()?.block_on(arbiter_service::api::serve(config))?;
            Ok(ExitCode::SUCCESS)
        }
    }
}
