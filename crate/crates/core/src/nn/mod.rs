//! Minimal differentiable-array substrate: tape tensors with reverse-mode
//! gradients, the BN-Linear-ReLU unit, attention, and the Adam optimizer.

pub mod adam;
pub mod fc;
pub mod gradcheck;
pub mod params;
pub mod tensor;

pub use adam::{AdamReport, AdamState, LrSchedule};
pub use fc::{FcBlock, Linear, Mode, NormParams};
pub use params::ParamStore;
pub use tensor::{Tape, Tid};

use crate::error::Result;

/// Scaled-dot-product attention over rank-2 tensors:
/// `softmax(Q K^T / sqrt(d) + mask) V`. The additive mask, when present,
/// must be `[L_q, L_k]`; `-inf` entries forbid positions.
pub fn softmax_attention(
    tape: &mut Tape,
    q: Tid,
    k: Tid,
    v: Tid,
    additive_mask: Option<Tid>,
) -> Result<Tid> {
    let d = tape.shape(q)[1];
    let kt = tape.transpose(k)?;
    let scores = tape.matmul(q, kt)?;
    let scaled = tape.scale(scores, 1.0 / (d as f64).sqrt());
    let masked = match additive_mask {
        Some(m) => tape.add(scaled, m)?,
        None => scaled,
    };
    let weights = tape.softmax_rows(masked)?;
    tape.matmul(weights, v)
}

