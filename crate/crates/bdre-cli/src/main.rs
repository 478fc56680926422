//! `bdre`: batch runner for survival probabilities, simulations and
//! diagnostics of Feller branching diffusions driven by a Brownian environment.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

mod commands;
mod config;
mod error;
mod output;

use std::io::Write;
use std::process::ExitCode;

use clap::Parser;

use config::{Cli, CliCommand, ExperimentConfig};
use error::CliError;
use output::Provenance;

const WORKERS_VAR: &str = "BDRE_NUM_WORKERS";

fn configure_workers() -> Result<(), CliError> {
    let Ok(raw) = std::env::var(WORKERS_VAR) else {
        return Ok(());
    };
    let k: usize = raw
        .trim()
        .parse()
        .ok()
        .filter(|&k| k >= 1)
        .ok_or_else(|| CliError::Config(format!("{WORKERS_VAR} must be an integer >= 1, got `{raw}`")))?;
    rayon::ThreadPoolBuilder::new()
        .num_threads(k)
        .build_global()
        .map_err(|e| CliError::Config(format!("cannot start {k} workers: {e}")))
}

fn load_config(path: &std::path::Path) -> Result<ExperimentConfig, CliError> {
    let text = std::fs::read_to_string(path).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
    if let Ok(cfg) = serde_json::from_str::<ExperimentConfig>(&text) {
        return Ok(cfg);
    }
    Ok(output::read_provenance(&text)?.config)
}

fn execute(cli: Cli) -> Result<(), CliError> {
    configure_workers()?;
    let cfg = match &cli.command {
        CliCommand::Run(r) => load_config(&r.config)?,
        other => config::from_cli(other).expect("every non-run command has a configuration"),
    };
    let artifact = commands::run(&cfg)?;
    let bytes = output::render(&Provenance::new(&cfg), &artifact)?;
    match &cfg.output_path {
        Some(p) => output::write_atomic(p, &bytes),
        None => std::io::stdout()
            .write_all(&bytes)
            .map_err(|e| CliError::Io(e.to_string())),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match execute(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("{}", e.line());
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
