//! Command-line entry point.
//!
//! Simultaneous invocations writing to the same output directory are not
//! coordinated; each stages into its own directory and the last to commit
//! wins per file.

use std::ffi::OsString;
use std::path::PathBuf;

use clap::{CommandFactory, FromArgMatches, Parser, Subcommand};

use crate::config::RunConfig;
use crate::error::{Error, Result};
use crate::pipeline::{self, staged};

#[derive(Debug, Parser)]
#[command(name = "paxnn", version, about = "Passenger activity reconstruction and forecasting")]
pub struct Cli {
    /// TOML config file; unset keys take their defaults.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Overrides both the generator and the training master seed.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Output directory; overrides `io.out_dir`.
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
    /// Worker threads (default: all cores). Outputs do not depend on it.
    #[arg(long, global = true)]
    pub jobs: Option<usize>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Write synthetic stays, flights, area map and true sequences under data/.
    Generate,
    /// Filter and reconstruct the stay traces into data/ingested.csv and data/discards.csv.
    Ingest,
    /// Train one architecture on the training split into models/<architecture>.
    Train {
        /// Overrides `train.architecture`.
        #[arg(long)]
        arch: Option<String>,
    },
    /// Misclassification curves of model bundles on the test split.
    Evaluate {
        /// Bundle directories (default: every bundle under models/).
        #[arg(long = "bundle")]
        bundles: Vec<PathBuf>,
    },
    /// Input ablation, random-input benchmark and hidden-size sweep.
    Ablate,
    /// Recursive against direct multi-step forecasting.
    Compare {
        /// Direct-set bundle to use instead of training one.
        #[arg(long)]
        bundle: Option<PathBuf>,
    },
    /// Generate, ingest, train, evaluate, ablate and compare in one go.
    Reproduce,
}

fn command() -> clap::Command {
    let help = RunConfig::keys_help();
    Cli::command()
        .after_help(help.clone())
        .mut_subcommands(|s| s.after_help(help.clone()))
}

fn resolve(cli: &Cli) -> Result<RunConfig> {
    let mut config = match &cli.config {
        Some(path) => RunConfig::load(path)?,
        None => RunConfig::default(),
    };
    if let Some(seed) = cli.seed {
        config.override_seed(seed);
    }
    if let Some(out) = &cli.out {
        config.io.out_dir = out.clone();
    }
    if let Command::Train { arch: Some(a) } = &cli.command {
        config.train.architecture = a.clone();
    }
    config.validate()?;
    Ok(config)
}

fn execute(cli: &Cli) -> Result<()> {
    if let Some(jobs) = cli.jobs {
        if jobs == 0 {
            return Err(Error::Config("--jobs must be at least 1".into()));
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(jobs)
            .build_global()
            .map_err(|e| Error::Config(format!("thread pool: {e}")))?;
    }
    let config = resolve(cli)?;
    let out = config.io.out_dir.clone();
    std::fs::create_dir_all(&out).map_err(|e| Error::io(&out, e))?;
    match &cli.command {
        Command::Generate => staged(&out, |o| pipeline::generate(&config, o)),
        Command::Ingest => staged(&out, |o| pipeline::ingest(&config, o).map(drop)),
        Command::Train { .. } => {
            let ds = pipeline::load_dataset(&config)?;
            staged(&out, |o| pipeline::train(&config, o, &ds, &config.train.architecture).map(drop))
        }
        Command::Evaluate { bundles } => {
            let ds = pipeline::load_dataset(&config)?;
            staged(&out, |o| pipeline::evaluate(&config, o, &ds, bundles).map(drop))
        }
        Command::Ablate => {
            let ds = pipeline::load_dataset(&config)?;
            staged(&out, |o| pipeline::ablate(&config, o, &ds).map(drop))
        }
        Command::Compare { bundle } => {
            staged(&out, |o| pipeline::compare(&config, o, bundle.as_deref()).map(drop))
        }
        Command::Reproduce => staged(&out, |o| pipeline::reproduce(&config, o)),
    }
}

/// Runs the CLI on `args` and returns the process exit code: 0 on success,
/// 2 for usage errors, 1 for anything else.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let matches = match command().try_get_matches_from(args) {
        Ok(m) => m,
        Err(e) => {
            let _ = e.print();
            return e.exit_code();
        }
    };
    let cli = match Cli::from_arg_matches(&matches) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return 2;
        }
    };
    match execute(&cli) {
        Ok(()) => 0,
        Err(e) => {
            log::error!("{e}");
            eprintln!("error: {e}");
            if e.is_usage() {
                2
            } else {
                1
            }
        }
    }
}
