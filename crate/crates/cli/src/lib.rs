//! `sigcamo` command line: one subcommand per pipeline stage plus `run`
//! for the whole experiment matrix.

pub mod commands;
pub mod config;
pub mod pipeline;
pub mod report;

use std::ffi::OsString;
use std::path::PathBuf;

use clap::{Parser, Subcommand};

use sigcamo::ingest::Pairing;

use crate::config::{DataType, DetectorKind};

/// Exit code when every cell and stage succeeded.
pub const EXIT_OK: i32 = 0;
/// Exit code when a stage failed or the report lists failed cells.
pub const EXIT_FAILURES: i32 = 1;
/// Exit code for command-line usage errors.
pub const EXIT_USAGE: i32 = 2;

#[derive(Debug, Parser)]
#[command(
    name = "sigcamo",
    version,
    about = "Signal camouflage experiments: divergence kernels, encodings, detectors"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Write a synthetic recording CSV.
    Synth {
        #[arg(long)]
        out: PathBuf,
        /// Run config whose `[data]` section supplies the generator settings.
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        rows: Option<usize>,
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Fuse and preprocess a recording into a per-pairing dataset CSV.
    Ingest {
        #[arg(long)]
        input: PathBuf,
        #[arg(long)]
        pairing: Pairing,
        #[arg(long)]
        out: PathBuf,
    },
    /// Encode every instance of a dataset as PGM images or WAV clips.
    Encode {
        #[arg(long)]
        input: PathBuf,
        #[arg(long)]
        pairing: Pairing,
        #[arg(long = "type")]
        data_type: DataType,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        config: Option<PathBuf>,
    },
    /// Compute descriptors (raw, GIST or MFCC) for a dataset.
    Features {
        #[arg(long)]
        input: PathBuf,
        #[arg(long)]
        pairing: Pairing,
        #[arg(long = "type")]
        data_type: DataType,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        config: Option<PathBuf>,
        /// GIST resize target; 0 keeps the native image side.
        #[arg(long)]
        resize: Option<usize>,
    },
    /// Nested cross-validation of one kernel on a descriptor CSV.
    Train {
        #[arg(long)]
        input: PathBuf,
        #[arg(long)]
        pairing: Pairing,
        /// Kernel key such as `scaled-mcjsd-GM` or `rbf-AM`.
        #[arg(long)]
        kernel: String,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long, default_value_t = 1101)]
        seed: u64,
    },
    /// Train a novelty detector and score the held-out rows.
    Detect {
        #[arg(long)]
        input: PathBuf,
        #[arg(long)]
        pairing: Pairing,
        #[arg(long)]
        detector: DetectorKind,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        config: Option<PathBuf>,
    },
    /// Metrics and curves from a `score,label,predicted` CSV.
    Evaluate {
        #[arg(long)]
        input: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Label treated as positive: `gesture` or `no-gesture`.
        #[arg(long, default_value = "gesture")]
        positive: String,
    },
    /// Print the summary table of a finished run.
    Report {
        #[arg(long)]
        run: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Run the full experiment matrix.
    Run {
        #[arg(long)]
        config: Option<PathBuf>,
        /// Overrides `output_dir` from the config.
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

/// Parses `args` (including the program name) and runs the command.
pub fn run_cli<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { EXIT_USAGE } else { EXIT_OK };
        }
    };
    match commands::dispatch(cli.command) {
        Ok(code) => code,
        Err(e) => {
            let code = e
                .downcast_ref::<sigcamo::Error>()
                .map_or("stage", sigcamo::Error::code);
            eprintln!("error[{code}]: {e:#}");
            EXIT_FAILURES
        }
    }
}
