//! Command-line front end: configuration, run orchestration and reports.

pub mod commands;
pub mod config;
pub mod error;
pub mod output;
pub mod schema;
pub mod svg;

use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};

pub use commands::{execute, Command, Invocation};
pub use config::{parse_config, Format, RunConfig};
pub use error::CliError;

#[derive(Debug, Parser)]
#[command(
    name = "crossdiff",
    version,
    about = "Two-species cross-diffusion simulator and verification harness"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Sub,
}

#[derive(Debug, Subcommand)]
pub enum Sub {
    /// Integrate one configuration and write trajectory and diagnostics.
    Run(Common),
    /// Run the viscosity ladder of the `sweep` section.
    Sweep(Common),
    /// Entropy inequality and balance-law residuals along one run.
    Diagnose(Common),
    /// Compare a run with its exact solution.
    OracleCheck(Common),
}

#[derive(Debug, Args)]
pub struct Common {
    /// JSON configuration file.
    #[arg(long)]
    pub config: PathBuf,
    /// Output directory, created if missing.
    #[arg(long, default_value = "crossdiff-out")]
    pub out: PathBuf,
    /// Worker threads (default: all cores).
    #[arg(long)]
    pub threads: Option<usize>,
    /// Output formats; overrides the config. Repeat or separate by commas.
    #[arg(long, value_enum, value_delimiter = ',')]
    pub format: Vec<Format>,
}

impl Cli {
    pub fn invocation(self) -> Invocation {
        let (command, c) = match self.command {
            Sub::Run(c) => (Command::Run, c),
            Sub::Sweep(c) => (Command::Sweep, c),
            Sub::Diagnose(c) => (Command::Diagnose, c),
            Sub::OracleCheck(c) => (Command::OracleCheck, c),
        };
        Invocation {
            command,
            config: c.config,
            out: c.out,
            threads: c.threads,
            formats: (!c.format.is_empty()).then_some(c.format),
        }
    }
}
