//! The `msprobit` command line: simulate, fit, predict, evaluate,
//! experiment and summarize.

pub mod commands;
pub mod config;
pub mod error;
pub mod io;

use std::path::PathBuf;

use clap::{Parser, Subcommand};

pub use error::{CliError, CliResult};

#[derive(Debug, Parser)]
#[command(name = "msprobit", version, about = "Multi-scale ordinal probit regression")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,

    /// TOML configuration; overrides the preset key by key.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,

    /// Built-in configuration: experiment1, experiment2, experiment1-desk, experiment2-desk.
    #[arg(long, global = true)]
    pub preset: Option<String>,

    #[arg(long, global = true)]
    pub seed: Option<u64>,

    /// Number of independent chains per fit.
    #[arg(long, global = true)]
    pub chains: Option<usize>,

    /// Output directory (default: current directory).
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,

    /// Standardise features (training rows only when splitting).
    #[arg(long, global = true)]
    pub standardize: bool,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Simulate a dataset and its true parameters.
    Simulate,
    /// Run the sampler on a dataset.
    Fit { dataset: PathBuf },
    /// Posterior class probabilities of every row on one scale.
    Predict {
        draws: PathBuf,
        dataset: PathBuf,
        /// Target scale id (1-based).
        #[arg(long)]
        scale: usize,
        /// Feature transform written by `fit --standardize`.
        #[arg(long)]
        transform: Option<PathBuf>,
    },
    /// Repeated train/test splits comparing single- and multi-scale fits.
    Evaluate { dataset: PathBuf },
    /// Replicated parameter-recovery experiment on simulated data.
    Experiment,
    /// Posterior summary of a draws file.
    Summarize { draws: PathBuf },
}

/// Runs one command and returns what it has to say on stdout.
pub fn run(cli: Cli) -> CliResult<String> {
    let config = config::load(cli.preset.as_deref(), cli.config.as_deref())?;
    let seed = config.seed(cli.seed);
    let out = cli.out.clone().unwrap_or_else(|| PathBuf::from("."));
    match &cli.command {
        Command::Simulate => commands::simulate(&config, seed, &out),
        Command::Fit { dataset } => {
            commands::fit(dataset, &config, seed, config.chains(cli.chains)?, cli.standardize, &out)
        }
        Command::Predict { draws, dataset, scale, transform } => {
            commands::predict(draws, dataset, *scale, transform.as_deref(), &out)
        }
        Command::Evaluate { dataset } => {
            commands::evaluate(dataset, &config, seed, config.chains(cli.chains)?, cli.standardize, &out)
        }
        Command::Experiment => commands::experiment(&config, seed, config.chains(cli.chains)?, &out),
        Command::Summarize { draws } => commands::summarize(draws, cli.out.as_deref()),
    }
}
