//! Command-line entry points and the HTTP scoring service.

pub mod commands;
pub mod config;
pub mod server;

use std::ffi::OsString;

use clap::{Args, Parser, Subcommand};
use std::path::PathBuf;

pub const EXIT_OK: i32 = 0;
pub const EXIT_USAGE: i32 = 1;
pub const EXIT_DATA: i32 = 2;

#[derive(Debug, Parser)]
#[command(name = "coughscreen", version, about = "Two-stage cough-audio screening")]
pub struct Cli {
    /// JSON run configuration (training, augmentation, fusion, folds).
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Seed for corpus generation, folds and initialization.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Args)]
pub struct ModelArgs {
    /// Checkpoint file; repeat once per routing case.
    #[arg(long = "model", required = true)]
    pub models: Vec<PathBuf>,
    /// Probability at or above which the label is "positive".
    #[arg(long, default_value_t = coughscreen_core::scoring::DEFAULT_THRESHOLD)]
    pub threshold: f64,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Print the sampling-rate routing table.
    Routes,
    /// Route a WAV file and summarize (or dump) its log-mel features.
    Featurize {
        #[arg(long)]
        input: PathBuf,
        /// Write every feature value as JSON here.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Write the synthetic two-class corpus and a combined manifest.
    GenSynthetic {
        #[arg(long)]
        out: PathBuf,
        /// Clips per case.
        #[arg(long, default_value_t = 600)]
        count: usize,
        /// Restrict to these cases (default: all three).
        #[arg(long = "case")]
        cases: Vec<String>,
    },
    /// Pretrain a stage-2 backbone on the proxy tagging task.
    Pretrain {
        /// CASE_4K, CASE_8K or CASE_48K.
        #[arg(long = "case")]
        case: String,
        /// Destination of the frozen stage-2 checkpoint.
        #[arg(long)]
        out: PathBuf,
    },
    /// Train one model per routed case on every manifest row.
    Train {
        #[arg(long)]
        manifest: PathBuf,
        /// Output directory for `<case>.fcv` checkpoints.
        #[arg(long)]
        out: PathBuf,
        /// Pretrained stage-2 checkpoint; repeat per case. Missing cases are
        /// pretrained on the fly.
        #[arg(long = "stage2")]
        stage2: Vec<PathBuf>,
    },
    /// k-fold cross-validation per routed case.
    Cv {
        /// CSV with columns uuid,path,label[,fold].
        #[arg(long)]
        manifest: PathBuf,
        /// Output directory for metrics, predictions and fold checkpoints.
        #[arg(long)]
        out: PathBuf,
        /// Stage-2 checkpoints from `pretrain`, as for `train`.
        #[arg(long = "stage2")]
        stage2: Vec<PathBuf>,
        /// Permute labels first (the permutation-null control).
        #[arg(long)]
        shuffle_labels: bool,
    },
    /// Score one WAV file and print a JSON response line.
    Predict {
        #[command(flatten)]
        model: ModelArgs,
        #[arg(long)]
        input: PathBuf,
    },
    /// AUC of loaded models over a manifest.
    Evaluate {
        #[command(flatten)]
        model: ModelArgs,
        #[arg(long)]
        manifest: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Serve POST /v1/score and GET /v1/health.
    Serve {
        #[command(flatten)]
        model: ModelArgs,
        #[arg(long, default_value_t = 8080)]
        port: u16,
        #[arg(long, default_value = "127.0.0.1")]
        host: String,
    },
}

/// Parses `argv` and runs the command; returns the process exit code.
pub fn run<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_USAGE } else { EXIT_OK };
            let _ = e.print();
            return code;
        }
    };
    match commands::execute(cli) {
        Ok(()) => EXIT_OK,
        Err(e) => {
            eprintln!("error: {e:#}");
            EXIT_DATA
        }
    }
}
