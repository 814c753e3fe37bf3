//! Additive attention masks over the time axis.

use crate::error::Result;
use crate::nn::{Tape, Tid};

use super::config::{AttentionMaskSpec, MaskVariant};

/// Build the constant part of an additive `[len, len]` attention mask:
/// `NEG_INFINITY` for blocked pairs, a Gaussian attenuation term for the
/// Gaussian variant, zero elsewhere. The learned variant's trainable profile
/// is added separately by [`mask_node`].
pub fn constant_mask(spec: &AttentionMaskSpec, len: usize, causal: bool) -> Vec<f64> {
    let half = (spec.window / 2) as isize;
    let mut mask = vec![0.0; len * len];
    for q in 0..len {
        for k in 0..len {
            let offset = k as isize - q as isize;
            let blocked = (causal && offset > 0)
                || (spec.variant != MaskVariant::Global && offset.abs() > half);
            if blocked {
                mask[q * len + k] = f64::NEG_INFINITY;
            } else if spec.variant == MaskVariant::GaussianLocal {
                let d = offset as f64;
                mask[q * len + k] = -d * d / (2.0 * spec.gaussian_std * spec.gaussian_std);
            }
        }
    }
    mask
}

/// Assemble the full additive mask as a tape node. `profile` is the trainable
/// `[window]` offset profile for the learned variant (ignored otherwise).
pub fn mask_node(
    tape: &mut Tape,
    spec: &AttentionMaskSpec,
    len: usize,
    causal: bool,
    profile: Option<Tid>,
) -> Result<Tid> {
    let base = tape.constant(&[len, len], constant_mask(spec, len, causal));
    match (spec.variant, profile) {
        (MaskVariant::LearnedLocal, Some(p)) => {
            let expanded = tape.local_mask_from_profile(p, len, spec.window)?;
            tape.add(base, expanded)
        }
        _ => Ok(base),
    }
}
