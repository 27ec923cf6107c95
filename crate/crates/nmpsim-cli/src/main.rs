//! Command line entry point.
//!
//! Exit codes: 0 on success, 1 for scenario errors (unreadable,
//! malformed, or invalid files), 2 when an interaction-enabled run
//! completes but still records delay-threshold violations — the network
//! was infeasible for the configured threshold.

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use nmpsim_cli::report::{self, compare_summary};
use nmpsim_cli::scenario_file::{load_scenario, validate_file};
use nmpsim_core::sim::{compare_modes, run_scenario, Scenario};

#[derive(Parser)]
#[command(
    name = "nmpsim",
    about = "Deterministic simulator of an SDN-assisted networked music performance system",
    version
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Replay a scenario and write transition, time-series, and summary
    /// reports.
    Run {
        /// Scenario file (TOML).
        #[arg(long)]
        scenario: PathBuf,
        /// Output directory for the report files.
        #[arg(long, default_value = "out")]
        out: PathBuf,
        /// Override the scenario's seed.
        #[arg(long)]
        seed: Option<u64>,
        /// Disable controller-to-application interaction for this run.
        #[arg(long)]
        no_interaction: bool,
    },
    /// Run a scenario twice (interaction enabled and disabled, same
    /// seed) and report the mouth-to-ear gain.
    Compare {
        #[arg(long)]
        scenario: PathBuf,
        #[arg(long, default_value = "out")]
        out: PathBuf,
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Check a scenario file and list every violation.
    Validate {
        #[arg(long)]
        scenario: PathBuf,
    },
}

fn main() -> ExitCode {
    match run() {
        Ok(code) => code,
        Err(err) => {
            eprintln!("error: {err:#}");
            ExitCode::from(1)
        }
    }
}

fn load_with_overrides(
    path: &PathBuf,
    seed: Option<u64>,
    no_interaction: bool,
) -> anyhow::Result<Scenario> {
    let mut scenario = load_scenario(path)?;
    if let Some(seed) = seed {
        scenario.seed = seed;
    }
    if no_interaction {
        scenario.interaction_enabled = false;
    }
    Ok(scenario)
}

fn run() -> anyhow::Result<ExitCode> {
    match Cli::parse().command {
        Command::Run {
            scenario,
            out,
            seed,
            no_interaction,
        } => {
            let scenario = load_with_overrides(&scenario, seed, no_interaction)?;
            let report = run_scenario(&scenario)?;
            report::write_run_report(&out, &report)?;
            print!("{}", report::summary_text(&report.summary));
            println!("transitions={}", report.transitions.len());
            println!("rows={}", report.rows.len());
            println!("report written to {}", out.display());
            // An interaction-enabled run that still violated the delay
            // threshold means the network was infeasible.
            if scenario.interaction_enabled && report.summary.ept_violations > 0 {
                return Ok(ExitCode::from(2));
            }
            Ok(ExitCode::SUCCESS)
        }
        Command::Compare { scenario, out, seed } => {
            let scenario = load_with_overrides(&scenario, seed, false)?;
            let report = compare_modes(&scenario)?;
            report::write_compare_report(&out, &report)?;
            print!("{}", report::summary_text(&compare_summary(&report)));
            if !report.gain.modification_occurred {
                println!("note: no audio modification occurred; gain is zero");
            }
            println!("report written to {}", out.display());
            if report.enabled.summary.ept_violations > 0 {
                return Ok(ExitCode::from(2));
            }
            Ok(ExitCode::SUCCESS)
        }
        Command::Validate { scenario } => {
            let violations = validate_file(&scenario)?;
            if violations.is_empty() {
                println!("scenario is valid");
                Ok(ExitCode::SUCCESS)
            } else {
                for violation in &violations {
                    println!("violation: {violation}");
                }
                Ok(ExitCode::from(1))
            }
        }
    }
}
