//! Argument parsing for the `dynregret` binary.

use std::ffi::OsString;
use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};

use crate::commands::{run_command, Command};
use crate::config::{ExperimentConfig, Overrides};
use crate::error::HarnessError;

#[derive(Debug, Parser)]
#[command(name = "dynregret", version, about = "Policy-regret experiments for online control")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Sub,
    #[command(flatten)]
    pub common: Common,
}

#[derive(Debug, Args)]
pub struct Common {
    /// Experiment config file.
    #[arg(long, global = true, value_name = "PATH")]
    pub config: Option<PathBuf>,
    /// Master seed; overrides the file.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Output directory; overrides the file and $DYNREGRET_OUT.
    #[arg(long, global = true, value_name = "DIR")]
    pub out: Option<PathBuf>,
    /// Horizons, comma-separated or repeated; override the file.
    #[arg(long = "horizon", global = true, value_delimiter = ',', value_name = "T")]
    pub horizons: Vec<usize>,
    /// Repetitions per horizon; overrides the file.
    #[arg(long, global = true)]
    pub reps: Option<usize>,
}

#[derive(Debug, Clone, Copy, Subcommand)]
pub enum Sub {
    /// Play the game and write per-round rows.
    Run,
    /// Compare measured regret with the itemized upper bound.
    Bound,
    /// Exact minimax values of a small finite game.
    Oracle,
    /// Per-round stability gaps.
    Stability,
    /// Sequential Rademacher complexity of the comparator class.
    Rademacher,
    /// Log-log slope of regret against the horizon.
    Slope,
}

impl From<Sub> for Command {
    fn from(s: Sub) -> Command {
        match s {
            Sub::Run => Command::Run,
            Sub::Bound => Command::Bound,
            Sub::Oracle => Command::Oracle,
            Sub::Stability => Command::Stability,
            Sub::Rademacher => Command::Rademacher,
            Sub::Slope => Command::Slope,
        }
    }
}

pub fn parse<I, T>(args: I) -> Result<Cli, clap::Error>
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    Cli::try_parse_from(args)
}

/// Loads the config, applies overrides and runs the subcommand.
pub fn execute(cli: &Cli, env_out: Option<PathBuf>) -> Result<Vec<PathBuf>, HarnessError> {
    let path = cli.common.config.as_ref().ok_or_else(|| HarnessError::config("--config", "a config file is required"))?;
    let overrides = Overrides {
        seed: cli.common.seed,
        out: cli.common.out.clone(),
        horizons: (!cli.common.horizons.is_empty()).then(|| cli.common.horizons.clone()),
        reps: cli.common.reps,
    };
    let cfg = ExperimentConfig::load(path)?.with_overrides(&overrides, env_out)?;
    run_command(cli.command.into(), &cfg)
}
