//! `rcm`: simulate, tag, split, train, evaluate and report.

mod commands;
mod config;
mod failure;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use rcm_core::eval::YearMonth;

#[derive(Debug, Parser)]
#[command(
    name = "rcm",
    version,
    about = "Residual-corrected container climate prediction"
)]
pub struct Cli {
    /// TOML run configuration.
    #[arg(long, short, global = true)]
    pub config: Option<PathBuf>,

    /// Output root; overrides `paths.output`.
    #[arg(long, global = true)]
    pub output: Option<PathBuf>,

    /// Replace an existing command output directory.
    #[arg(long, global = true)]
    pub force: bool,

    /// Print the feature schema as JSON and exit.
    #[arg(long)]
    pub emit_schema: bool,

    #[command(subcommand)]
    pub command: Option<Command>,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate a synthetic dataset with ground truth and its map.
    Simulate {
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        shipments: Option<usize>,
    },
    /// Fill the environment column from a geofile.
    Tag {
        #[arg(long)]
        data: Option<PathBuf>,
        #[arg(long)]
        geofile: Option<PathBuf>,
    },
    /// Write expanding-window split manifests.
    Split {
        #[arg(long)]
        data: Option<PathBuf>,
        #[arg(long, value_delimiter = ',')]
        months: Vec<YearMonth>,
    },
    /// Train the baseline and every configured variant for one cutoff.
    Train {
        #[arg(long)]
        data: Option<PathBuf>,
        /// Test month whose cutoff bounds the training data; defaults to the last configured month.
        #[arg(long)]
        month: Option<YearMonth>,
    },
    /// Backtest over every configured month.
    Evaluate {
        #[arg(long)]
        data: Option<PathBuf>,
        /// Trained bundles to check against the run configuration.
        #[arg(long)]
        models: Option<PathBuf>,
        #[arg(long)]
        workers: Option<usize>,
        #[arg(long, value_delimiter = ',')]
        months: Vec<YearMonth>,
    },
    /// Render Markdown tables and error histograms from an evaluation.
    Report {
        /// Evaluation output directory; defaults to `<output>/evaluate`.
        #[arg(long)]
        input: Option<PathBuf>,
    },
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::new().filter_or("RCM_LOG", "warn")).init();
    let cli = Cli::parse();
    match commands::run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("{}", f.to_json_line());
            ExitCode::FAILURE
        }
    }
}
