//! Command-line front end for the max-min auction toolkit.

pub mod commands;
pub mod config;

use std::path::PathBuf;

use clap::{Parser, Subcommand, ValueEnum};

use config::{Overrides, RunConfig};

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("{0}")]
    Input(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Input(_) => 1,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, ValueEnum)]
pub enum Format {
    #[default]
    Json,
    Csv,
}

#[derive(Debug, Parser)]
#[command(name = "maxmin", version, about = "Robust revenue guarantees for correlated private values")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
    /// JSON run configuration.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Grid size (overrides the config).
    #[arg(long, global = true)]
    pub grid: Option<usize>,
    /// Number of bidders (overrides the config).
    #[arg(long, global = true)]
    pub n: Option<usize>,
    /// Directory for output files.
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
    #[arg(long, global = true, value_enum, default_value_t = Format::Json)]
    pub format: Format,
}

#[derive(Debug, Clone, Copy, Subcommand)]
pub enum Command {
    /// Test the regularity conditions on the marginal.
    Check,
    /// Build nature's adversarial correlation structure.
    Adversary,
    /// Solve the worst-case correlation LP for the configured mechanism.
    WorstCase,
    /// Revenue guarantee of the configured mechanism.
    Guarantee,
    /// Compare guarantees across mechanism classes.
    Compare,
    /// Verify the saddle point numerically.
    Saddle,
}

/// Result of one invocation: text for stdout and stderr, files to write
/// under `--out`, and the process exit status.
#[derive(Debug, Clone, Default)]
pub struct Outcome {
    pub stdout: String,
    pub stderr: String,
    pub files: Vec<(String, String)>,
    pub exit: i32,
}

pub fn run(cli: &Cli) -> Result<(Outcome, Option<PathBuf>), CliError> {
    let path = cli.config.as_ref().ok_or_else(|| CliError::Input("--config is required".into()))?;
    let over = Overrides { grid: cli.grid, n: cli.n, out: cli.out.clone() };
    let run = RunConfig::load(path)?.validate(&over)?;
    let outcome = match cli.command {
        Command::Check => commands::check(&run, cli.format),
        Command::Adversary => commands::adversary(&run, cli.format),
        Command::WorstCase => commands::worst_case(&run, cli.format),
        Command::Guarantee => commands::guarantee(&run, cli.format),
        Command::Compare => commands::compare(&run, cli.format),
        Command::Saddle => commands::saddle(&run, cli.format),
    }?;
    Ok((outcome, run.out))
}
