//! Kinematics-aware decoder: per-joint feature chains fused along the
//! skeleton (FK and IK passes), structured cross-attention against the audio
//! memory, and masked per-joint self-attention over time.

use rand::Rng;

use crate::error::{CoreError, Result};
use crate::nn::{softmax_attention, FcBlock, Linear, Mode, NormParams, ParamStore, Tape, Tid};

use super::config::{MaskVariant, ModelConfig};
use super::mask::mask_node;

/// Column slice via transpose / row slice / transpose.
fn slice_cols(tape: &mut Tape, x: Tid, start: usize, len: usize) -> Result<Tid> {
    let xt = tape.transpose(x)?;
    let part = tape.slice_rows(xt, start, len)?;
    tape.transpose(part)
}

/// Validate a parent table: one root, parents listed before children.
pub fn validate_parents(parents: &[Option<usize>]) -> Result<()> {
    let roots = parents.iter().filter(|p| p.is_none()).count();
    if roots != 1 {
        return Err(CoreError::Schema(format!("expected one root joint, found {roots}")));
    }
    for (j, p) in parents.iter().enumerate() {
        if let Some(p) = *p {
            if p >= j {
                return Err(CoreError::Schema(
                    "joints must be listed in topological order".into(),
                ));
            }
        }
    }
    Ok(())
}

/// One kinematic-chain fusion block: a forward pass embedding each joint
/// after adding its parent's feature (root to leaves), then a symmetric
/// inverse pass from the leaves back to the root. Fusion is additive so
/// every joint keeps its own feature lane.
pub struct KpmBlock {
    fk: Vec<FcBlock>,
    ik: Vec<FcBlock>,
}

impl KpmBlock {
    pub fn new(
        store: &mut ParamStore,
        name: &str,
        joints: usize,
        joint_dim: usize,
        rng: &mut impl Rng,
    ) -> KpmBlock {
        KpmBlock {
            fk: (0..joints)
                .map(|j| FcBlock::new(store, &format!("{name}.fk{j}"), joint_dim, joint_dim, rng))
                .collect(),
            ik: (0..joints)
                .map(|j| FcBlock::new(store, &format!("{name}.ik{j}"), joint_dim, joint_dim, rng))
                .collect(),
        }
    }

    /// Root-to-leaves pass only.
    pub fn forward_fk(
        &mut self,
        tape: &mut Tape,
        store: &ParamStore,
        parents: &[Option<usize>],
        inputs: &[Tid],
        mode: Mode,
    ) -> Result<Vec<Tid>> {
        let mut out: Vec<Option<Tid>> = vec![None; inputs.len()];
        for j in 0..inputs.len() {
            let fused = match parents[j] {
                Some(p) => {
                    let parent = out[p].expect("topological order");
                    tape.add(inputs[j], parent)?
                }
                None => inputs[j],
            };
            out[j] = Some(self.fk[j].forward(tape, store, fused, mode)?);
        }
        Ok(out.into_iter().map(|t| t.unwrap()).collect())
    }

    /// Full FK-IK pass over per-joint features (each `[rows, joint_dim]`).
    pub fn forward(
        &mut self,
        tape: &mut Tape,
        store: &ParamStore,
        parents: &[Option<usize>],
        inputs: &[Tid],
        mode: Mode,
    ) -> Result<Vec<Tid>> {
        let joints = inputs.len();
        let down = self.forward_fk(tape, store, parents, inputs, mode)?;
        let mut children: Vec<Vec<usize>> = vec![Vec::new(); joints];
        for (j, p) in parents.iter().enumerate() {
            if let Some(p) = *p {
                children[p].push(j);
            }
        }
        let mut up: Vec<Option<Tid>> = vec![None; joints];
        for j in (0..joints).rev() {
            let mut fused = down[j];
            for &c in &children[j] {
                let child = up[c].expect("reverse topological order");
                fused = tape.add(fused, child)?;
            }
            up[j] = Some(self.ik[j].forward(tape, store, fused, mode)?);
        }
        Ok(up.into_iter().map(|t| t.unwrap()).collect())
    }
}

/// Per-joint attention over the audio memory: each joint owns its key and
/// value embeddings of the shared memory, so attention weights differ per
/// joint and outputs stay in the joint's own feature lane (no concat/split).
pub struct StructuredHeads {
    keys: Vec<FcBlock>,
    values: Vec<FcBlock>,
    queries: Vec<Linear>,
}

impl StructuredHeads {
    pub fn new(
        store: &mut ParamStore,
        name: &str,
        joints: usize,
        model_dim: usize,
        joint_dim: usize,
        rng: &mut impl Rng,
    ) -> StructuredHeads {
        StructuredHeads {
            keys: (0..joints)
                .map(|j| FcBlock::new(store, &format!("{name}.key{j}"), model_dim, joint_dim, rng))
                .collect(),
            values: (0..joints)
                .map(|j| FcBlock::new(store, &format!("{name}.value{j}"), model_dim, joint_dim, rng))
                .collect(),
            queries: (0..joints)
                .map(|j| Linear::new(store, &format!("{name}.query{j}"), joint_dim, joint_dim, rng))
                .collect(),
        }
    }
}

struct DecoderLayer {
    norm_self: NormParams,
    self_q: Linear,
    self_k: Linear,
    self_v: Linear,
    /// Trainable in-window profile for the learned mask variant.
    mask_profile: Option<usize>,
    norm_cross: NormParams,
    cross: StructuredHeads,
    norm_kpm: NormParams,
    kpm: Vec<KpmBlock>,
}

/// Sample boundaries of a folded `[sum(lens), dim]` tensor.
#[derive(Debug, Clone)]
struct Fold {
    offsets: Vec<usize>,
    lens: Vec<usize>,
}

impl Fold {
    fn new(lens: &[usize]) -> Fold {
        let mut offsets = Vec::with_capacity(lens.len());
        let mut acc = 0;
        for &l in lens {
            offsets.push(acc);
            acc += l;
        }
        Fold { offsets, lens: lens.to_vec() }
    }
}

pub struct Decoder {
    parents: Vec<Option<usize>>,
    token_proj: Vec<Linear>,
    embed_kpm: KpmBlock,
    layers: Vec<DecoderLayer>,
    final_norm: NormParams,
    heads: Vec<Linear>,
}

impl Decoder {
    pub fn new(
        store: &mut ParamStore,
        config: &ModelConfig,
        parents: &[Option<usize>],
        rng: &mut impl Rng,
    ) -> Result<Decoder> {
        config.validate()?;
        validate_parents(parents)?;
        if parents.len() != config.joints {
            return Err(CoreError::Schema(format!(
                "parent table lists {} joints, config says {}",
                parents.len(),
                config.joints
            )));
        }
        let d = config.joint_dim;
        let layers = (0..config.decoder_layers)
            .map(|l| {
                let name = |part: &str| format!("decoder.layer{l}.{part}");
                DecoderLayer {
                    norm_self: NormParams::new(store, &name("norm_self"), d),
                    self_q: Linear::new(store, &name("self_q"), d, d, rng),
                    self_k: Linear::new(store, &name("self_k"), d, d, rng),
                    self_v: Linear::new(store, &name("self_v"), d, d, rng),
                    mask_profile: (config.attention.variant == MaskVariant::LearnedLocal)
                        .then(|| store.add_zeros(&name("mask_profile"), &[config.attention.window])),
                    norm_cross: NormParams::new(store, &name("norm_cross"), d),
                    cross: StructuredHeads::new(
                        store,
                        &name("cross"),
                        config.joints,
                        config.model_dim,
                        d,
                        rng,
                    ),
                    norm_kpm: NormParams::new(store, &name("norm_kpm"), d),
                    kpm: (0..2)
                        .map(|b| KpmBlock::new(store, &name(&format!("kpm{b}")), config.joints, d, rng))
                        .collect(),
                }
            })
            .collect();
        Ok(Decoder {
            parents: parents.to_vec(),
            token_proj: config
                .token_dims
                .iter()
                .enumerate()
                .map(|(j, &td)| Linear::new(store, &format!("decoder.token_proj{j}"), td, d, rng))
                .collect(),
            embed_kpm: KpmBlock::new(store, "decoder.embed_kpm", config.joints, d, rng),
            layers,
            final_norm: NormParams::new(store, "decoder.final_norm", d),
            heads: config
                .head_dims
                .iter()
                .enumerate()
                .map(|(j, &hd)| Linear::new(store, &format!("decoder.head{j}"), d, hd, rng))
                .collect(),
        })
    }

    /// Decode a batch. `tokens[i]` is the shifted target sequence
    /// `[L_i, token_dim]` for sample `i` and `memories[i]` its encoded audio
    /// `[K_i, model_dim]`. Returns per-sample outputs `[L_i, output_dim]`.
    ///
    /// Per-joint FC units run on row-concatenated batches so batch-norm
    /// statistics pool over batch and time together; attention runs per
    /// sample on row slices.
    pub fn forward(
        &mut self,
        tape: &mut Tape,
        store: &ParamStore,
        config: &ModelConfig,
        memories: &[Tid],
        tokens: &[Tid],
        mode: Mode,
    ) -> Result<Vec<Tid>> {
        if memories.len() != tokens.len() || tokens.is_empty() {
            return Err(CoreError::InvalidArgument(
                "need matching, non-empty memory and token batches".into(),
            ));
        }
        let lens: Vec<usize> = tokens.iter().map(|&t| tape.shape(t)[0]).collect();
        let mem_lens: Vec<usize> = memories.iter().map(|&m| tape.shape(m)[0]).collect();
        let fold = Fold::new(&lens);
        let mem_fold = Fold::new(&mem_lens);

        let folded_tokens = tape.concat_rows(tokens)?;
        let folded_memory = tape.concat_rows(memories)?;

        // Split tokens per joint, project to the joint width, then run the
        // embedding fusion block.
        let mut col = 0;
        let mut feats: Vec<Tid> = Vec::with_capacity(config.joints);
        for (j, &td) in config.token_dims.iter().enumerate() {
            let chunk = slice_cols(tape, folded_tokens, col, td)?;
            col += td;
            feats.push(self.token_proj[j].forward(tape, store, chunk)?);
        }
        feats = self.embed_kpm.forward(tape, store, &self.parents, &feats, mode)?;

        for layer in &mut self.layers {
            // Masked per-joint self-attention over time.
            let mut masks = Vec::with_capacity(lens.len());
            for &len in &lens {
                let profile = layer.mask_profile.map(|idx| tape.param(store, idx));
                masks.push(mask_node(tape, &config.attention, len, true, profile)?);
            }
            let mut attended = Vec::with_capacity(config.joints);
            for &f in &feats {
                let normed = layer.norm_self.forward(tape, store, f)?;
                let q = layer.self_q.forward(tape, store, normed)?;
                let k = layer.self_k.forward(tape, store, normed)?;
                let v = layer.self_v.forward(tape, store, normed)?;
                let mut parts = Vec::with_capacity(lens.len());
                for (i, &len) in fold.lens.iter().enumerate() {
                    let qs = tape.slice_rows(q, fold.offsets[i], len)?;
                    let ks = tape.slice_rows(k, fold.offsets[i], len)?;
                    let vs = tape.slice_rows(v, fold.offsets[i], len)?;
                    parts.push(softmax_attention(tape, qs, ks, vs, Some(masks[i]))?);
                }
                attended.push(tape.concat_rows(&parts)?);
            }
            for j in 0..config.joints {
                feats[j] = tape.add(feats[j], attended[j])?;
            }

            // Structured cross-attention against the audio memory.
            let cross_masks: Vec<Option<Tid>> = (0..lens.len())
                .map(|i| {
                    if config.causal_cross {
                        let (lq, lk) = (fold.lens[i], mem_fold.lens[i]);
                        let mut data = vec![0.0; lq * lk];
                        for q in 0..lq {
                            for k in q + 1..lk {
                                data[q * lk + k] = f64::NEG_INFINITY;
                            }
                        }
                        Some(tape.constant(&[lq, lk], data))
                    } else {
                        None
                    }
                })
                .collect();
            let mut crossed = Vec::with_capacity(config.joints);
            for j in 0..config.joints {
                let normed = layer.norm_cross.forward(tape, store, feats[j])?;
                let q = layer.cross.queries[j].forward(tape, store, normed)?;
                let k = layer.cross.keys[j].forward(tape, store, folded_memory, mode)?;
                let v = layer.cross.values[j].forward(tape, store, folded_memory, mode)?;
                let mut parts = Vec::with_capacity(lens.len());
                for i in 0..lens.len() {
                    let qs = tape.slice_rows(q, fold.offsets[i], fold.lens[i])?;
                    let ks = tape.slice_rows(k, mem_fold.offsets[i], mem_fold.lens[i])?;
                    let vs = tape.slice_rows(v, mem_fold.offsets[i], mem_fold.lens[i])?;
                    parts.push(softmax_attention(tape, qs, ks, vs, cross_masks[i])?);
                }
                crossed.push(tape.concat_rows(&parts)?);
            }
            for j in 0..config.joints {
                feats[j] = tape.add(feats[j], crossed[j])?;
            }

            // Kinematic-chain fusion, two blocks, one residual.
            let mut normed = Vec::with_capacity(config.joints);
            for j in 0..config.joints {
                normed.push(layer.norm_kpm.forward(tape, store, feats[j])?);
            }
            let mut fused = normed;
            for block in &mut layer.kpm {
                fused = block.forward(tape, store, &self.parents, &fused, mode)?;
            }
            for j in 0..config.joints {
                feats[j] = tape.add(feats[j], fused[j])?;
            }
        }

        // Per-joint output heads, concatenated back to full tokens.
        let mut outs = Vec::with_capacity(config.joints);
        for j in 0..config.joints {
            let normed = self.final_norm.forward(tape, store, feats[j])?;
            outs.push(self.heads[j].forward(tape, store, normed)?);
        }
        let folded_out = tape.concat_cols(&outs)?;
        let mut per_sample = Vec::with_capacity(lens.len());
        for i in 0..lens.len() {
            per_sample.push(tape.slice_rows(folded_out, fold.offsets[i], fold.lens[i])?);
        }
        Ok(per_sample)
    }
}
