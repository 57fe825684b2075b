use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use tagsed::cli;
use tagsed::config::RunConfig;

/// Two-stage semi-supervised sound event detection.
#[derive(Parser)]
#[command(name = "tagsed", version, about)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic tone corpus with manifests and a ready run
    /// config.
    Synthdata {
        /// Output directory for audio/ and manifests.
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 60)]
        clips: usize,
        #[arg(long, default_value_t = 3)]
        classes: usize,
        #[arg(long, default_value_t = 7)]
        seed: u64,
    },
    /// Train the stage-1 audio-tagging model.
    TrainStage1 {
        #[arg(long)]
        config: PathBuf,
    },
    /// Infer pseudo-weak labels on the unlabeled set with the stage-1
    /// model.
    InferPseudo {
        #[arg(long)]
        config: PathBuf,
    },
    /// Train the stage-2 sound-event-detection model.
    TrainStage2 {
        #[arg(long)]
        config: PathBuf,
    },
    /// Score the stage-2 model (or a prediction TSV) with PSDS.
    Evaluate {
        #[arg(long)]
        config: PathBuf,
        /// Score this events TSV instead of running the checkpoint.
        #[arg(long)]
        predictions: Option<PathBuf>,
    },
    /// Summarize training logs and evaluation scores as CSV.
    Report {
        #[arg(long)]
        config: PathBuf,
    },
}

fn run() -> tagsed::Result<()> {
    match Cli::parse().command {
        Command::Synthdata {
            out,
            clips,
            classes,
            seed,
        } => cli::cmd_synthdata(&out, clips, classes, seed),
        Command::TrainStage1 { config } => {
            cli::cmd_train_stage1(&RunConfig::from_file(&config)?).map(|_| ())
        }
        Command::InferPseudo { config } => {
            cli::cmd_infer_pseudo(&RunConfig::from_file(&config)?).map(|_| ())
        }
        Command::TrainStage2 { config } => {
            cli::cmd_train_stage2(&RunConfig::from_file(&config)?).map(|_| ())
        }
        Command::Evaluate {
            config,
            predictions,
        } => cli::cmd_evaluate(&RunConfig::from_file(&config)?, predictions.as_deref()).map(|_| ()),
        Command::Report { config } => cli::cmd_report(&RunConfig::from_file(&config)?),
    }
}

fn main() -> ExitCode {
    match run() {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}
