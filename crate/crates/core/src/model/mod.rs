//! Music-to-motion sequence model: a transformer encoder over audio
//! features and a kinematics-aware per-joint decoder.

pub mod config;
pub mod decoder;
pub mod encoder;
pub mod mask;

pub use config::{AttentionMaskSpec, MaskVariant, ModelConfig};
pub use decoder::{Decoder, KpmBlock, StructuredHeads};
pub use encoder::{sinusoidal_encoding, Encoder};

use rand::Rng;

use crate::error::Result;
use crate::nn::{Mode, ParamStore, Tape, Tid};

/// Encoder plus decoder with a shared configuration.
pub struct SeqModel {
    pub config: ModelConfig,
    pub encoder: Encoder,
    pub decoder: Decoder,
}

impl SeqModel {
    pub fn new(
        store: &mut ParamStore,
        config: ModelConfig,
        parents: &[Option<usize>],
        rng: &mut impl Rng,
    ) -> Result<SeqModel> {
        config.validate()?;
        let encoder = Encoder::new(store, &config, rng);
        let decoder = Decoder::new(store, &config, parents, rng)?;
        Ok(SeqModel { config, encoder, decoder })
    }

    /// Encode one audio feature sequence `[len, input_dim]`.
    pub fn encode(
        &self,
        tape: &mut Tape,
        store: &ParamStore,
        features: Tid,
        mode: Mode,
    ) -> Result<Tid> {
        self.encoder.forward(tape, store, &self.config, features, mode)
    }

    /// Teacher-forced forward over a batch: per-sample feature sequences and
    /// shifted target tokens in, per-sample `[L_i, output_dim]` predictions
    /// out.
    pub fn forward(
        &mut self,
        tape: &mut Tape,
        store: &ParamStore,
        features: &[Tid],
        tokens: &[Tid],
        mode: Mode,
    ) -> Result<Vec<Tid>> {
        let mut memories = Vec::with_capacity(features.len());
        for &f in features {
            memories.push(self.encode(tape, store, f, mode)?);
        }
        self.decoder.forward(tape, store, &self.config, &memories, tokens, mode)
    }
}
