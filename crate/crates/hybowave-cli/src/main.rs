//! `hybowave`: train and query hyperbolic wavelet link-prediction models on
//! tab-separated edge lists.
//!
//! Exit codes: 0 success, 2 invalid input, 3 numerical failure.

mod commands;
mod config;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

#[derive(Parser)]
#[command(name = "hybowave", version, about = "Hyperbolic wavelet link prediction")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Split an edge list into train/val/test partitions with fixed negatives.
    Split {
        /// Edge-list file: one `label<TAB>label` pair per line.
        #[arg(long)]
        edges: PathBuf,
        #[arg(long, default_value_t = 42)]
        seed: u64,
        /// Output split manifest (JSON).
        #[arg(long)]
        out: PathBuf,
    },
    /// Train a model and write checkpoint.json + metrics.json.
    Train {
        #[arg(long)]
        edges: PathBuf,
        /// Split manifest from `split`; derived from the seed when absent.
        #[arg(long)]
        split: Option<PathBuf>,
        /// JSON configuration file (flat keys, same names as --set).
        #[arg(long)]
        config: Option<PathBuf>,
        /// Override one configuration key, e.g. --set use_wavelet=false.
        #[arg(long = "set", value_name = "KEY=VALUE")]
        set: Vec<String>,
        /// Output directory.
        #[arg(long)]
        out: PathBuf,
        /// Train this many models with consecutive seeds; metrics.json then
        /// reports mean and standard deviation.
        #[arg(long, default_value_t = 1)]
        repeats: usize,
    },
    /// Score node pairs with a trained checkpoint.
    Predict {
        #[arg(long)]
        checkpoint: PathBuf,
        /// Pairs file: one `label<TAB>label` per line.
        #[arg(long, conflicts_with = "topk")]
        pairs: Option<PathBuf>,
        /// Rank all non-training pairs and keep the best K.
        #[arg(long)]
        topk: Option<usize>,
        /// Output TSV: label_a, label_b, score, probability.
        #[arg(long)]
        out: PathBuf,
    },
    /// Run the 3x2 encoder/module ablation grid.
    Ablate {
        #[arg(long)]
        edges: PathBuf,
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long = "set", value_name = "KEY=VALUE")]
        set: Vec<String>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Train across diffusion scale lists and tabulate the metrics.
    ScaleSweep {
        #[arg(long)]
        edges: PathBuf,
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long = "set", value_name = "KEY=VALUE")]
        set: Vec<String>,
        /// Comma-separated scale list, repeatable (e.g. --scales 1,2,3).
        /// Defaults to every increasing list of length 2-4 with values <= 7.
        #[arg(long = "scales", value_name = "LIST")]
        scale_lists: Vec<String>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Report the 10 most important input features of a checkpoint.
    Importance {
        #[arg(long)]
        checkpoint: PathBuf,
        /// Output CSV: rank, feature_index, weight.
        #[arg(long)]
        out: PathBuf,
    },
}

fn run(cli: Cli) -> anyhow::Result<()> {
    match cli.command {
        Command::Split { edges, seed, out } => commands::cmd_split(&edges, seed, &out),
        Command::Train {
            edges,
            split,
            config,
            set,
            out,
            repeats,
        } => commands::cmd_train(&edges, split.as_deref(), config.as_deref(), &set, &out, repeats),
        Command::Predict {
            checkpoint,
            pairs,
            topk,
            out,
        } => commands::cmd_predict(&checkpoint, pairs.as_deref(), topk, &out),
        Command::Ablate {
            edges,
            config,
            set,
            out,
        } => commands::cmd_ablate(&edges, config.as_deref(), &set, &out),
        Command::ScaleSweep {
            edges,
            config,
            set,
            scale_lists,
            out,
        } => commands::cmd_scale_sweep(&edges, config.as_deref(), &set, &scale_lists, &out),
        Command::Importance { checkpoint, out } => commands::cmd_importance(&checkpoint, &out),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            eprintln!("error: {err:#}");
            let numerical = err
                .downcast_ref::<hybowave::Error>()
                .is_some_and(|e| e.is_numerical());
            ExitCode::from(if numerical { 3 } else { 2 })
        }
    }
}
