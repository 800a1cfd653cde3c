use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use beamsight::cli;
use beamsight::config::ExperimentConfig;
use beamsight::models::ModelKind;

#[derive(Parser)]
#[command(
    name = "beamsight",
    about = "Synthetic multi-modal mmWave beam prediction experiments"
)]
struct Args {
    #[command(subcommand)]
    command: Command,
}

#[derive(clap::Args)]
struct CommonOpts {
    /// Experiment config (TOML). Defaults apply for every omitted key.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Override the config's output directory.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Override every seeded stage (scene, split, training).
    #[arg(long)]
    seed: Option<u64>,
}

#[derive(Subcommand)]
enum Command {
    /// Generate the raw and processed datasets.
    Generate {
        #[command(flatten)]
        common: CommonOpts,
    },
    /// Train one model on the processed dataset.
    Train {
        #[command(flatten)]
        common: CommonOpts,
        /// Which model to train.
        #[arg(long, value_enum)]
        model: ModelArg,
    },
    /// Evaluate all three trained models on the validation split.
    Eval {
        #[command(flatten)]
        common: CommonOpts,
    },
    /// Run the training-fraction sweep for the fused model.
    Sweep {
        #[command(flatten)]
        common: CommonOpts,
    },
}

#[derive(Clone, Copy, clap::ValueEnum)]
enum ModelArg {
    Vision,
    Position,
    Fusion,
}

impl From<ModelArg> for ModelKind {
    fn from(m: ModelArg) -> Self {
        match m {
            ModelArg::Vision => ModelKind::Vision,
            ModelArg::Position => ModelKind::Position,
            ModelArg::Fusion => ModelKind::Fusion,
        }
    }
}

fn load_config(common: &CommonOpts) -> beamsight::Result<ExperimentConfig> {
    let mut cfg = match &common.config {
        Some(path) => ExperimentConfig::load(path)?,
        None => ExperimentConfig::default(),
    };
    if let Some(out) = &common.out {
        cfg.output_dir = out.clone();
    }
    if let Some(seed) = common.seed {
        cfg.override_seed(seed);
    }
    Ok(cfg)
}

fn run() -> beamsight::Result<()> {
    match Args::parse().command {
        Command::Generate { common } => cli::cmd_generate(&load_config(&common)?),
        Command::Train { common, model } => cli::cmd_train(&load_config(&common)?, model.into()),
        Command::Eval { common } => cli::cmd_eval(&load_config(&common)?),
        Command::Sweep { common } => cli::cmd_sweep(&load_config(&common)?),
    }
}

fn main() -> ExitCode {
    match run() {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error[{}]: {e}", e.category());
            ExitCode::FAILURE
        }
    }
}
