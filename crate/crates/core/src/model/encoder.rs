//! Pre-norm transformer encoder over audio feature sequences.

use rand::Rng;

use crate::error::Result;
use crate::nn::{softmax_attention, Linear, Mode, NormParams, ParamStore, Tape, Tid};

use super::config::ModelConfig;
use super::mask::mask_node;

/// Classic sinusoidal positional encoding, `[len, dim]` row-major.
pub fn sinusoidal_encoding(len: usize, dim: usize) -> Vec<f64> {
    let mut out = vec![0.0; len * dim];
    for pos in 0..len {
        for i in 0..dim {
            let pair = (i / 2) as f64;
            let angle = pos as f64 / 10000f64.powf(2.0 * pair / dim as f64);
            out[pos * dim + i] = if i % 2 == 0 { angle.sin() } else { angle.cos() };
        }
    }
    out
}

struct EncoderLayer {
    norm_attn: NormParams,
    q: Vec<Linear>,
    k: Vec<Linear>,
    v: Vec<Linear>,
    out: Linear,
    norm_ff: NormParams,
    ff1: Linear,
    ff2: Linear,
}

pub struct Encoder {
    input_proj: Linear,
    layers: Vec<EncoderLayer>,
    final_norm: NormParams,
    /// Trainable in-window profile when the encoder shares the learned mask
    /// variant; offset-indexed, length `window`.
    mask_profile: Option<usize>,
}

impl Encoder {
    pub fn new(store: &mut ParamStore, config: &ModelConfig, rng: &mut impl Rng) -> Encoder {
        let d = config.model_dim;
        let head_dim = d / config.encoder_heads;
        let layers = (0..config.encoder_layers)
            .map(|l| {
                let name = |part: &str| format!("encoder.layer{l}.{part}");
                EncoderLayer {
                    norm_attn: NormParams::new(store, &name("norm_attn"), d),
                    q: (0..config.encoder_heads)
                        .map(|h| Linear::new(store, &name(&format!("q{h}")), d, head_dim, rng))
                        .collect(),
                    k: (0..config.encoder_heads)
                        .map(|h| Linear::new(store, &name(&format!("k{h}")), d, head_dim, rng))
                        .collect(),
                    v: (0..config.encoder_heads)
                        .map(|h| Linear::new(store, &name(&format!("v{h}")), d, head_dim, rng))
                        .collect(),
                    out: Linear::new(store, &name("out"), d, d, rng),
                    norm_ff: NormParams::new(store, &name("norm_ff"), d),
                    ff1: Linear::new(store, &name("ff1"), d, config.feedforward_dim, rng),
                    ff2: Linear::new(store, &name("ff2"), config.feedforward_dim, d, rng),
                }
            })
            .collect();
        let mask_profile = if config.attention_on_encoder
            && config.attention.variant == super::config::MaskVariant::LearnedLocal
        {
            Some(store.add_zeros("encoder.mask_profile", &[config.attention.window]))
        } else {
            None
        };
        Encoder {
            input_proj: Linear::new(store, "encoder.input_proj", config.input_dim, d, rng),
            layers,
            final_norm: NormParams::new(store, "encoder.final_norm", d),
            mask_profile,
        }
    }

    /// Encode one feature sequence `[len, input_dim]` into memory
    /// `[len, model_dim]`. The encoder is norm-based throughout, so samples
    /// in a batch can be encoded independently.
    pub fn forward(
        &self,
        tape: &mut Tape,
        store: &ParamStore,
        config: &ModelConfig,
        features: Tid,
        _mode: Mode,
    ) -> Result<Tid> {
        let len = tape.shape(features)[0];
        let d = config.model_dim;
        let projected = self.input_proj.forward(tape, store, features)?;
        let posenc = tape.constant(&[len, d], sinusoidal_encoding(len, d));
        let mut x = tape.add(projected, posenc)?;

        let mask = if config.attention_on_encoder {
            let profile = self.mask_profile.map(|idx| tape.param(store, idx));
            Some(mask_node(tape, &config.attention, len, config.causal_encoder, profile)?)
        } else if config.causal_encoder {
            let global = super::config::AttentionMaskSpec::global();
            Some(mask_node(tape, &global, len, true, None)?)
        } else {
            None
        };

        for layer in &self.layers {
            let normed = layer.norm_attn.forward(tape, store, x)?;
            let mut heads = Vec::with_capacity(layer.q.len());
            for h in 0..layer.q.len() {
                let q = layer.q[h].forward(tape, store, normed)?;
                let k = layer.k[h].forward(tape, store, normed)?;
                let v = layer.v[h].forward(tape, store, normed)?;
                heads.push(softmax_attention(tape, q, k, v, mask)?);
            }
            let concat = tape.concat_cols(&heads)?;
            let attended = layer.out.forward(tape, store, concat)?;
            x = tape.add(x, attended)?;

            let normed = layer.norm_ff.forward(tape, store, x)?;
            let hidden = layer.ff1.forward(tape, store, normed)?;
            let hidden = tape.relu(hidden);
            let ff = layer.ff2.forward(tape, store, hidden)?;
            x = tape.add(x, ff)?;
        }
        self.final_norm.forward(tape, store, x)
    }
}
