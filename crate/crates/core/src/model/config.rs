//! Architecture configuration for the two-stage sequence models.

use crate::error::{CoreError, Result};

/// Self-attention mask family (the ablation axis).
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MaskVariant {
    Global,
    Local,
    GaussianLocal,
    LearnedLocal,
}

/// Time-axis attention masking: a window of visible relative offsets plus an
/// optional Gaussian or learned additive profile inside it.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AttentionMaskSpec {
    pub variant: MaskVariant,
    /// Window size in tokens, odd.
    pub window: usize,
    /// Standard deviation of the Gaussian profile, in tokens.
    pub gaussian_std: f64,
}

impl AttentionMaskSpec {
    pub fn global() -> AttentionMaskSpec {
        AttentionMaskSpec { variant: MaskVariant::Global, window: 17, gaussian_std: 4.0 }
    }

    pub fn validate(&self) -> Result<()> {
        if self.window % 2 == 0 || self.window == 0 {
            return Err(CoreError::InvalidArgument(format!(
                "attention window must be odd and >= 1, got {}",
                self.window
            )));
        }
        if self.gaussian_std <= 0.0 {
            return Err(CoreError::InvalidArgument("gaussian std must be positive".into()));
        }
        Ok(())
    }
}

impl Default for AttentionMaskSpec {
    /// Learned local window of 17 is the variant the full system uses.
    fn default() -> AttentionMaskSpec {
        AttentionMaskSpec { variant: MaskVariant::LearnedLocal, window: 17, gaussian_std: 4.0 }
    }
}

/// Full model hyperparameters. Token and head layouts are per joint so the
/// two stages can split their output vectors differently.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelConfig {
    /// Audio feature width fed to the wave encoder.
    pub input_dim: usize,
    pub model_dim: usize,
    pub encoder_layers: usize,
    pub encoder_heads: usize,
    pub feedforward_dim: usize,
    pub decoder_layers: usize,
    /// Per-joint feature width inside the decoder.
    pub joint_dim: usize,
    pub joints: usize,
    /// Width of each joint's chunk of a decoder input token.
    pub token_dims: Vec<usize>,
    /// Width of each joint's chunk of a decoder output token.
    pub head_dims: Vec<usize>,
    pub attention: AttentionMaskSpec,
    /// Apply the mask variant to encoder self-attention as well.
    pub attention_on_encoder: bool,
    /// Causal encoder self-attention, so memory row `i` only summarizes
    /// features up to beat `i`.
    pub causal_encoder: bool,
    /// Mask cross-attention so decoder position `i` sees memory positions
    /// `<= i` only. Both stages align tokens with memory rows (one per
    /// beat/segment), which makes generation causal through the whole
    /// pipeline, not just within the decoder.
    pub causal_cross: bool,
}

impl ModelConfig {
    pub fn token_dim(&self) -> usize {
        self.token_dims.iter().sum()
    }

    pub fn output_dim(&self) -> usize {
        self.head_dims.iter().sum()
    }

    pub fn validate(&self) -> Result<()> {
        if self.joints == 0 || self.joint_dim == 0 || self.model_dim == 0 || self.input_dim == 0 {
            return Err(CoreError::InvalidArgument("model dims must be positive".into()));
        }
        if self.decoder_layers == 0 {
            return Err(CoreError::InvalidArgument("need at least one decoder layer".into()));
        }
        if self.token_dims.len() != self.joints || self.head_dims.len() != self.joints {
            return Err(CoreError::Schema(format!(
                "token/head layout must list all {} joints",
                self.joints
            )));
        }
        if self.model_dim % self.encoder_heads != 0 {
            return Err(CoreError::InvalidArgument(
                "model_dim must divide evenly into encoder heads".into(),
            ));
        }
        self.attention.validate()
    }
}
