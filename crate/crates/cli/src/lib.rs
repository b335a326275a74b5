//! Experiment runner: configuration, the `verify | fig2 | compare | bench | sim`
//! commands, and their CSV and SVG artifacts.

pub mod commands;
pub mod config;
pub mod error;
pub mod output;
pub mod svg;
pub mod verify;

use config::{Cli, Command, RunConfig};
pub use error::{CliError, Result};

/// Runs the parsed command line and returns the text report for stdout.
pub fn run(cli: &Cli) -> Result<String> {
    let config = RunConfig::from_cli(cli)?;
    match config.command {
        Command::Verify => {
            let options = verify::VerifyOptions {
                samples: config.samples,
                seed: config.scenario.seed(),
                ..verify::VerifyOptions::default()
            };
            let checks = verify::run_all(&options)?;
            let report: String = checks.iter().map(|c| format!("{c}\n")).collect();
            match checks
                .iter()
                .filter(|c| !c.passed())
                .map(|c| c.name)
                .collect::<Vec<_>>()
            {
                failed if failed.is_empty() => Ok(report),
                failed => Err(CliError::Failed(format!(
                    "{report}failed checks: {}",
                    failed.join(", ")
                ))),
            }
        }
        Command::Fig2 => Ok(commands::fig2::run(&config)?.to_string()),
        Command::Compare => Ok(commands::compare::run(&config)?.to_string()),
        Command::Bench => Ok(commands::bench::run(&config)?.to_string()),
        Command::Sim => Ok(commands::sim::run(&config)?.to_string()),
    }
}
