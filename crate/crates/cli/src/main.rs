mod commands;
mod config;
mod plot;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

/// Brain-MRI tumor classification: CNN training, deep-feature classifiers,
/// metrics and Grad-CAM localization.
#[derive(Parser, Debug)]
#[command(name = "tumorscope", version)]
pub struct Cli {
    #[command(flatten)]
    pub common: Common,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Args, Debug, Clone)]
pub struct Common {
    /// Dataset root containing one subdirectory per class.
    #[arg(long, global = true)]
    pub data: Option<PathBuf>,
    /// Output directory.
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
    /// Seed for splitting, generation, initialization and classifiers.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Configuration file (`key = value` with `[section]` headers).
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Sequential numerics for byte-identical reruns.
    #[arg(long, global = true)]
    pub deterministic: bool,
    /// Use N generated images per class instead of --data.
    #[arg(long, global = true, value_name = "N")]
    pub synthetic: Option<usize>,
    /// More log output (-v info, -vv debug).
    #[arg(short, long, global = true, action = clap::ArgAction::Count)]
    pub verbose: u8,
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// Train the CNN; writes model.tsck, epochs.csv, curves.svg, manifest.tsv.
    Train {
        #[arg(long)]
        epochs: Option<usize>,
        #[arg(long)]
        batch_size: Option<usize>,
        #[arg(long)]
        lr: Option<f64>,
    },
    /// Write flatten-layer features of a dataset to features.csv.
    Extract {
        #[arg(long)]
        model: PathBuf,
        /// Split assignment written by `train`.
        #[arg(long)]
        manifest: Option<PathBuf>,
        /// Only rows from the evaluation split.
        #[arg(long)]
        eval_only: bool,
    },
    /// Fit all six classifiers on feature CSVs; writes grid.csv and grid.txt.
    Classify {
        /// Feature files, optionally as NAME=PATH.
        #[arg(required = true)]
        features: Vec<String>,
        /// Split assignment by id; without it rows are split by the config.
        #[arg(long)]
        manifest: Option<PathBuf>,
    },
    /// Grad-CAM heatmaps and overlays for images.
    Localize {
        #[arg(long)]
        model: PathBuf,
        /// Image files (PGM/PPM).
        images: Vec<PathBuf>,
        /// Target class; defaults to the predicted class.
        #[arg(long)]
        class: Option<usize>,
        #[arg(long)]
        alpha: Option<f32>,
        /// Nearest-neighbour upsampling instead of bilinear.
        #[arg(long)]
        nearest: bool,
    },
    /// Metrics of the CNN head on the evaluation split; writes metrics.csv.
    Evaluate {
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        manifest: Option<PathBuf>,
    },
    /// Random hyperparameter search; writes search.csv and best.conf.
    Search {
        #[arg(long)]
        trials: Option<usize>,
        #[arg(long)]
        budget_epochs: Option<usize>,
    },
    /// Generate a synthetic dataset as PGM files plus blobs.tsv.
    Synth {
        /// Side length of generated images.
        #[arg(long)]
        size: Option<usize>,
    },
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let level = match cli.common.verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).init();
    match commands::run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(commands::exit_code(&e))
        }
    }
}
