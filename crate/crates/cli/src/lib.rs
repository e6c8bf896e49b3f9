//! Experiment runner for `overtensor`: seed sweeps, constructions, lazy-bound
//! curves and the vanilla baseline, with CSV/JSONL output.

// `!(x > 0.0)` deliberately rejects NaN along with non-positive values.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod args;
pub mod commands;
pub mod config;
pub mod error;

use std::path::Path;

use args::{Cli, Command};
use config::Config;
use error::CliError;

fn with_file(path: Option<&Path>, flags: Config, allowed: &[&str]) -> Result<Config, CliError> {
    let file = match path {
        Some(p) => Config::load(p)?,
        None => Config::default(),
    };
    let cfg = file.merged(flags);
    cfg.check_keys(allowed)?;
    Ok(cfg)
}

/// Dispatches a parsed command line.
pub fn execute(cli: &Cli) -> Result<(), CliError> {
    let file = cli.config.as_deref();
    match &cli.command {
        Command::Run(a) => commands::cmd_run(&with_file(file, a.to_config(), args::RunArgs::KEYS)?),
        Command::Localmin(a) => commands::cmd_localmin(&with_file(file, a.to_config(), args::LocalminArgs::KEYS)?),
        Command::Lazybound(a) => commands::cmd_lazybound(&with_file(file, a.to_config(), args::LazyboundArgs::KEYS)?),
        Command::Baseline(a) => commands::cmd_baseline(&with_file(file, a.to_config(), args::BaselineArgs::KEYS)?),
    }
}
