//! File formats and command implementations for the `dancegen` CLI:
//! motion files, pose-sequence files, dataset manifests, checkpoints,
//! train configs, and WAV ingestion.

pub mod checkpoint;
pub mod cli;
pub mod commands;
pub mod config;
pub mod error;
pub mod manifest;
pub mod motionfile;
pub mod posefile;
pub mod wav;

pub use error::{Result, ToolError};
