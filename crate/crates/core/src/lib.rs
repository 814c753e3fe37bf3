//! Beat-synchronized dance motion synthesis.
//!
//! The crate covers the full desk-scale pipeline: audio beat tracking and
//! feature extraction, key-pose generation and parametric motion-curve
//! prediction with kinematics-aware transformer models, Kochanek-Bartels
//! spline evaluation and fitting, and the evaluation metric suite.

pub mod error;
pub mod audio;
pub mod curves;
pub mod metrics;
pub mod model;
pub mod nn;
pub mod pipeline;
pub mod kinematics;

pub use error::{CoreError, Result};
