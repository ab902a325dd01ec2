//! Command-line front end and the file formats it reads and writes.
//!
//! Subcommands: `gen-data`, `train`, `sample`, `inpaint`, `eval` and
//! `gradcheck`, all sharing `--config`, `--seed`, `--out` and `--dry-run`.
//! Exit codes: 0 success, 1 failed check or aborted training, 2 usage or
//! configuration error, 3 I/O or format error.

mod commands;
mod config;
mod data;
mod formats;

use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};

pub use commands::{
    cmd_eval, cmd_gen_data, cmd_gradcheck, cmd_inpaint, cmd_sample, cmd_train, parse_positions, Outcome,
};
pub use config::{ExperimentConfig, ScalarFamily, Task};
pub use data::{mvn_dataset, scalar_dataset, Bars};
pub use formats::{parse_idx, pgm_bytes, read_idx, write_pgm, TensorFile, TENSOR_MAGIC, TENSOR_VERSION};

use crate::error::Error;

#[derive(Debug, Parser)]
#[command(name = "aiqn", version, about = "Autoregressive implicit quantile networks")]
pub struct Cli {
    /// Experiment config file (`key = value` lines).
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Overrides the config seed.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Output directory; overrides the config.
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
    /// Print the resolved config and exit.
    #[arg(long, global = true)]
    pub dry_run: bool,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate or ingest the configured dataset.
    GenData,
    /// Train on the dataset and write a checkpoint and metrics CSV.
    Train,
    /// Draw samples from a checkpoint.
    Sample(SampleArgs),
    /// Complete a known prefix of a data row.
    Inpaint(InpaintArgs),
    /// Compare model samples with a dataset.
    Eval(EvalArgs),
    /// Check analytic gradients against finite differences.
    Gradcheck(GradcheckArgs),
}

#[derive(Debug, Args)]
pub struct SampleArgs {
    #[arg(long)]
    pub checkpoint: Option<PathBuf>,
    #[arg(long, default_value_t = 16)]
    pub count: usize,
    /// Override the checkpoint's tau mode (`per-dimension` or `shared`).
    #[arg(long)]
    pub tau_mode: Option<String>,
}

#[derive(Debug, Args)]
pub struct InpaintArgs {
    #[arg(long)]
    pub checkpoint: Option<PathBuf>,
    /// Known positions, e.g. `0-31` or `0,1,2`; must be the first positions
    /// of the model's ordering.
    #[arg(long)]
    pub known: String,
    /// Tensor file holding the row to complete; defaults to the dataset.
    #[arg(long)]
    pub source: Option<PathBuf>,
    #[arg(long, default_value_t = 0)]
    pub row: usize,
    #[arg(long, default_value_t = 16)]
    pub count: usize,
}

#[derive(Debug, Args)]
pub struct EvalArgs {
    #[arg(long)]
    pub checkpoint: Option<PathBuf>,
    /// Dataset to compare against; defaults to the configured one.
    #[arg(long)]
    pub data: Option<PathBuf>,
    /// Model samples; defaults to `min(rows, 10000)`.
    #[arg(long)]
    pub samples: Option<usize>,
}

#[derive(Debug, Args)]
pub struct GradcheckArgs {
    /// Corrupt one analytic gradient entry by 1e-2 before comparing.
    #[arg(long)]
    pub inject_fault: bool,
}

/// Exit code for an error.
pub fn exit_code(e: &Error) -> i32 {
    match e {
        Error::Training { .. } | Error::Integration { .. } => 1,
        Error::Domain(_) | Error::Config(_) => 2,
        Error::Io { .. } | Error::Format { .. } => 3,
    }
}

/// Parses `args` (including the program name) and runs the command.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 2 } else { 0 };
            let _ = e.print();
            return code;
        }
    };
    match commands::dispatch(&cli) {
        Ok(Outcome::Success) => 0,
        Ok(Outcome::CheckFailed) => 1,
        Err(e) => {
            eprintln!("error: {e}");
            exit_code(&e)
        }
    }
}
