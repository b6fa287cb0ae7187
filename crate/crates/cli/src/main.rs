//! `motionhmm`: batch workflows over labeled motion datasets.

mod args;
mod commands;
mod output;

use std::fmt;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use args::{FeatureArgs, ModelArgs, SystemArgs, SystemKind};

/// Bad flag combinations that clap itself cannot reject.
#[derive(Debug)]
pub struct UsageError(pub String);

impl fmt::Display for UsageError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for UsageError {}

#[derive(Debug, Parser)]
#[command(name = "motionhmm", version, about = "Multi-label motion classification with HMMs")]
pub struct Cli {
    /// Worker threads; defaults to all cores.
    #[arg(long, global = true, env = "MOTIONHMM_THREADS")]
    pub threads: Option<usize>,
    /// Root seed for every random choice.
    #[arg(long, global = true, default_value_t = 0)]
    pub seed: u64,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Check, summarize or export a dataset.
    #[command(subcommand)]
    Dataset(DatasetCommand),
    /// Train a system and write it as a bundle directory.
    Train {
        #[arg(value_enum)]
        system: SystemKind,
        #[arg(long)]
        dataset: PathBuf,
        #[command(flatten)]
        args: SystemArgs,
        #[arg(long)]
        out: PathBuf,
    },
    /// Classify one motion file with a trained bundle.
    Classify {
        #[arg(long)]
        bundle: PathBuf,
        #[arg(long)]
        motion: PathBuf,
        /// Print labels and per-model loglikelihoods as JSON.
        #[arg(long)]
        json: bool,
    },
    #[command(subcommand)]
    Eval(EvalCommand),
    /// Backward feature elimination.
    SelectFeatures {
        #[arg(long)]
        dataset: PathBuf,
        #[command(flatten)]
        features: FeatureArgs,
        #[command(flatten)]
        model: ModelArgs,
        #[arg(long, default_value_t = 3)]
        k: usize,
        #[arg(long, default_value_t = 1)]
        min_features: usize,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Cross-validate every combination of a parameter grid.
    GridSearch {
        #[arg(long)]
        grid: PathBuf,
        #[arg(long)]
        dataset: PathBuf,
        #[arg(long, value_enum, default_value = "multilabel")]
        system: SystemKind,
        #[command(flatten)]
        args: SystemArgs,
        #[arg(long, default_value_t = 3)]
        k: usize,
        /// f1, precision, recall, accuracy or total_accuracy.
        #[arg(long, default_value = "f1")]
        metric: String,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Sample a labeled dataset from known HMMs.
    Synth {
        #[arg(long)]
        classes: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
}

#[derive(Debug, Subcommand)]
pub enum DatasetCommand {
    Validate {
        dataset: PathBuf,
    },
    Report {
        dataset: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Write the dataset as a single archive file.
    Export {
        dataset: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
}

#[derive(Debug, Subcommand)]
pub enum EvalCommand {
    /// Stratified k-fold cross-validation of one configuration.
    Kfold {
        #[arg(long)]
        dataset: PathBuf,
        #[arg(long, value_enum, default_value = "multilabel")]
        system: SystemKind,
        #[command(flatten)]
        args: SystemArgs,
        #[arg(long, default_value_t = 3)]
        k: usize,
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

/// 1 for filesystem trouble, 2 for bad input or usage.
fn exit_code(err: &anyhow::Error) -> u8 {
    for cause in err.chain() {
        if cause.is::<UsageError>() || cause.is::<serde_json::Error>() {
            return 2;
        }
        if let Some(e) = cause.downcast_ref::<motionhmm::Error>() {
            return if e.is_io() { 1 } else { 2 };
        }
        if cause.is::<std::io::Error>() {
            return 1;
        }
    }
    1
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    if let Some(n) = cli.threads {
        if n == 0 {
            eprintln!("error: --threads must be positive");
            return ExitCode::from(2);
        }
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(n).build_global() {
            eprintln!("error: {e}");
            return ExitCode::from(1);
        }
    }
    match commands::run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(exit_code(&e))
        }
    }
}
