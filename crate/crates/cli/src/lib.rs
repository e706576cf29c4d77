//! Front end for the `fudge` binary: configuration, file formats and the
//! four subcommands.

pub mod commands;
pub mod config;
pub mod error;
pub mod io;

use std::path::PathBuf;

use clap::{Parser, ValueEnum};

use crate::config::RunConfig;
use crate::error::CliResult;

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Command {
    Simulate,
    Estimate,
    Roc,
    Tune,
}

#[derive(Debug, Parser)]
#[command(name = "fudge", version, about = "Differential graphs between two populations of functional data")]
pub struct Args {
    pub command: Command,
    /// TOML run configuration.
    #[arg(long, short)]
    pub config: Option<PathBuf>,
    /// Output directory, overriding `output`.
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Base seed for simulation and fold assignment.
    #[arg(long)]
    pub seed: Option<u64>,
    /// Override a configuration key, e.g. `--set simulate.p=20`.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    pub overrides: Vec<String>,
}

impl Args {
    /// The validated configuration with all flags applied.
    pub fn config(&self) -> CliResult<RunConfig> {
        let mut cfg = RunConfig::load(self.config.as_deref(), &self.overrides)?;
        if let Some(out) = &self.out {
            cfg.output = out.clone();
        }
        if let Some(seed) = self.seed {
            if let Some(s) = cfg.simulate.as_mut() {
                s.seed = seed;
            }
            if let Some(t) = cfg.tune.as_mut() {
                t.seed = seed;
            }
        }
        cfg.validate()?;
        Ok(cfg)
    }
}

pub fn run(args: &Args) -> CliResult<()> {
    let cfg = args.config()?;
    match args.command {
        Command::Simulate => commands::simulate(&cfg),
        Command::Estimate => commands::estimate(&cfg),
        Command::Roc => commands::roc(&cfg),
        Command::Tune => commands::tune(&cfg),
    }
}
