//! Command-line front end: preprocess, synth, train, predict, evaluate,
//! params.

mod commands;
pub mod config;

use std::ffi::OsString;
use std::path::PathBuf;

use clap::error::ErrorKind;
use clap::{Parser, Subcommand};

pub use config::{Overrides, RunConfig, RUN_CONFIG_FILE};

pub const EXIT_OK: i32 = 0;
pub const EXIT_USAGE: i32 = 1;
pub const EXIT_RUNTIME: i32 = 2;

/// Environment variable capping the worker thread count.
pub const THREADS_ENV: &str = "EDGEATTNET_THREADS";

#[derive(Debug)]
pub enum CliError {
    Usage(anyhow::Error),
    Runtime(anyhow::Error),
}

impl CliError {
    pub fn usage(msg: impl Into<String>) -> Self {
        CliError::Usage(anyhow::anyhow!(msg.into()))
    }
}

impl From<anyhow::Error> for CliError {
    fn from(e: anyhow::Error) -> Self {
        CliError::Runtime(e)
    }
}

impl From<edgeattnet::Error> for CliError {
    fn from(e: edgeattnet::Error) -> Self {
        CliError::Runtime(e.into())
    }
}

#[derive(Debug, Parser)]
#[command(name = "edgeattnet", version, about = "Filament segmentation on full-disk H-alpha images")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Normalize, find the disk, flatten, smooth and equalize every image in a directory.
    Preprocess {
        #[arg(long)]
        input: Option<PathBuf>,
        #[arg(long)]
        output: Option<PathBuf>,
        #[command(flatten)]
        overrides: Overrides,
    },
    /// Write a synthetic filament dataset.
    Synth {
        #[arg(long)]
        output: Option<PathBuf>,
        #[arg(long)]
        count: Option<usize>,
        /// Run the preprocessing pipeline over each rendered image.
        #[arg(long)]
        preprocess: bool,
        #[command(flatten)]
        overrides: Overrides,
    },
    /// Train a network on a dataset directory.
    Train {
        /// Dataset directory holding `index.json`.
        #[arg(long)]
        input: Option<PathBuf>,
        #[arg(long)]
        output: Option<PathBuf>,
        /// Train/validation/test counts, e.g. `48,8,8`.
        #[arg(long, value_parser = parse_split)]
        split: Option<[usize; 3]>,
        #[command(flatten)]
        overrides: Overrides,
    },
    /// Write binary masks (and optional overlays) for a directory of images.
    Predict {
        #[arg(long)]
        checkpoint: Option<PathBuf>,
        #[arg(long)]
        input: Option<PathBuf>,
        #[arg(long)]
        output: Option<PathBuf>,
        #[arg(long)]
        overlay: bool,
        #[command(flatten)]
        overrides: Overrides,
    },
    /// Score predicted masks against ground truth.
    Evaluate {
        /// Directory of predicted masks, or a predict output directory.
        #[arg(long)]
        input: Option<PathBuf>,
        /// COCO-style JSON file, or a dataset directory holding `index.json`.
        #[arg(long)]
        annotations: Option<PathBuf>,
        #[arg(long)]
        output: Option<PathBuf>,
        /// `split.json` from a training run; only its test ids are scored.
        #[arg(long)]
        split_file: Option<PathBuf>,
        #[command(flatten)]
        overrides: Overrides,
    },
    /// Per-layer parameter counts.
    Params {
        /// `all` or one variant.
        #[arg(long, default_value = "all")]
        variant: String,
        #[arg(long)]
        input_size: Option<usize>,
        #[arg(long)]
        base_width: Option<usize>,
        /// Emit JSON instead of tables.
        #[arg(long)]
        json: bool,
        /// Also write the reports and run config here.
        #[arg(long)]
        output: Option<PathBuf>,
    },
}

fn parse_split(s: &str) -> Result<[usize; 3], String> {
    let parts: Vec<usize> = s
        .split(',')
        .map(|p| p.trim().parse::<usize>().map_err(|e| format!("{p:?}: {e}")))
        .collect::<Result<_, _>>()?;
    <[usize; 3]>::try_from(parts).map_err(|v| format!("expected three counts, got {}", v.len()))
}

fn worker_pool() -> Result<rayon::ThreadPool, CliError> {
    let threads = match std::env::var(THREADS_ENV) {
        Ok(v) => match v.trim().parse::<usize>() {
            Ok(n) if n > 0 => n,
            _ => return Err(CliError::usage(format!("{THREADS_ENV}={v:?} is not a positive integer"))),
        },
        Err(_) => std::thread::available_parallelism().map_or(1, |n| n.get()),
    };
    rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .build()
        .map_err(|e| CliError::Runtime(e.into()))
}

pub fn execute(cli: Cli) -> Result<(), CliError> {
    let pool = worker_pool()?;
    pool.install(|| commands::dispatch(cli.command))
}

/// Parses `args` (program name first), runs the command and returns the
/// process exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let _ = env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).try_init();
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => EXIT_OK,
                _ => EXIT_USAGE,
            };
        }
    };
    match execute(cli) {
        Ok(()) => EXIT_OK,
        Err(CliError::Usage(e)) => {
            eprintln!("error: {e:#}");
            EXIT_USAGE
        }
        Err(CliError::Runtime(e)) => {
            eprintln!("error: {e:#}");
            EXIT_RUNTIME
        }
    }
}
