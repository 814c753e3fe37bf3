//! Argument definitions and dispatch. Exit-code contract: 0 on success,
//! 1 on usage errors, 2 on data errors.

use std::path::PathBuf;

use clap::{Parser, Subcommand};

use crate::checkpoint::SizeTag;
use crate::commands;
use crate::error::Result;

#[derive(Parser)]
#[command(name = "dancegen", about = "Music-conditioned dance motion synthesis toolkit", version)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Subcommand)]
pub enum Command {
    /// Track the beat grid of a WAV file.
    Beats {
        #[arg(long)]
        audio: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Extract beat-window and segment audio features as JSON.
    Features {
        #[arg(long)]
        audio: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Fit TCB motion curves of a dense pose sequence against a beat grid.
    Fit {
        #[arg(long)]
        pose: PathBuf,
        /// Beats file produced by `beats`.
        #[arg(long)]
        beats: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Densely sample a motion file into a pose-sequence file.
    Sample {
        #[arg(long)]
        motion: PathBuf,
        #[arg(long, default_value_t = 60.0)]
        fps: f64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Train one stage on the train split of a dataset manifest.
    Train {
        #[arg(long)]
        stage: u8,
        /// Dataset manifest (JSON).
        #[arg(long)]
        data: PathBuf,
        /// Training settings file (JSON); see configs/train-default.json.
        #[arg(long)]
        config: PathBuf,
        /// Output directory for the checkpoint and metrics log.
        #[arg(long)]
        out: PathBuf,
        /// Override the model size from the config (small | full).
        #[arg(long)]
        size: Option<SizeTag>,
    },
    /// Generate a dance for a piece of music from two stage checkpoints.
    Generate {
        #[arg(long)]
        audio: PathBuf,
        #[arg(long)]
        stage1: PathBuf,
        #[arg(long)]
        stage2: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 60.0)]
        fps: f64,
        /// Also write the densely sampled pose sequence here.
        #[arg(long)]
        pose_out: Option<PathBuf>,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// Run the metric suite over paired ground-truth/prediction pose dirs.
    Evaluate {
        #[arg(long)]
        gt: PathBuf,
        #[arg(long)]
        pred: PathBuf,
        #[arg(long, default_value_t = 60.0)]
        fps: f64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Print the structural counts of a motion file.
    Inspect {
        #[arg(long)]
        motion: PathBuf,
    },
}

pub fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Beats { audio, out } => commands::cmd_beats(&audio, &out),
        Command::Features { audio, out } => commands::cmd_features(&audio, &out),
        Command::Fit { pose, beats, out } => commands::cmd_fit(&pose, &beats, &out),
        Command::Sample { motion, fps, out } => commands::cmd_sample(&motion, fps, &out),
        Command::Train { stage, data, config, out, size } => {
            commands::cmd_train(stage, &data, &config, &out, size)
        }
        Command::Generate { audio, stage1, stage2, out, fps, pose_out, seed } => {
            commands::cmd_generate(&audio, &stage1, &stage2, &out, fps, pose_out.as_deref(), seed)
        }
        Command::Evaluate { gt, pred, fps, out } => commands::cmd_evaluate(&gt, &pred, fps, &out),
        Command::Inspect { motion } => commands::cmd_inspect(&motion),
    }
}
