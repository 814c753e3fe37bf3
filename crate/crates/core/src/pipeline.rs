//! The two-stage generation and training system: beat features to key
//! poses, segment features plus key poses to motion-curve parameters,
//! conditional discriminators, and end-to-end music-to-motion generation.

use rand::Rng;

use crate::audio::{
    beat_features, detect_beats, segment_features, stft, BeatGrid, BeatParams, WaveBuffer,
    BEAT_FEATURE_DIM, SEGMENT_FEATURE_DIM,
};
use crate::curves::{
    decode_segment_params, encode_segment_params, sample_curveset, CurveSet, Knot, MotionCurve,
    SampledSequence,
};
use crate::error::{CoreError, Result};
use crate::kinematics::{
    keypose_to_pose, KeyPose, Quaternion, SkeletonTopology, CANONICAL_CHANNELS, CANONICAL_JOINTS,
    KEYPOSE_DIM,
};
use crate::model::{AttentionMaskSpec, ModelConfig, SeqModel};
use crate::nn::{AdamState, Linear, LrSchedule, Mode, ParamStore, Tape, Tid};

/// Raw spline parameters per channel.
pub const PARAMS_PER_CHANNEL: usize = 7;
/// Stage-2 output width: 99 channels x 7 parameters.
pub const STAGE2_OUTPUT_DIM: usize = CANONICAL_CHANNELS * PARAMS_PER_CHANNEL;

/// Shared size knobs; the attentions and IO widths come from the stage.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ModelSize {
    pub model_dim: usize,
    pub encoder_layers: usize,
    pub encoder_heads: usize,
    pub feedforward_dim: usize,
    pub decoder_layers: usize,
    pub joint_dim: usize,
}

impl ModelSize {
    /// Full-scale configuration.
    pub fn full() -> ModelSize {
        ModelSize {
            model_dim: 256,
            encoder_layers: 6,
            encoder_heads: 8,
            feedforward_dim: 1024,
            decoder_layers: 6,
            joint_dim: 64,
        }
    }

    /// Deliberately tiny configuration for smoke tests and CI.
    pub fn small() -> ModelSize {
        ModelSize {
            model_dim: 32,
            encoder_layers: 1,
            encoder_heads: 2,
            feedforward_dim: 64,
            decoder_layers: 1,
            joint_dim: 16,
        }
    }
}

/// Stage-1 per-joint output: 3 position + 4 quaternion scalars.
fn stage1_layout() -> Vec<usize> {
    vec![7; CANONICAL_JOINTS]
}

/// Stage-2 per-joint output: the root emits 7 channels (root translation
/// plus its rotation), every other joint 4 rotation channels, each channel
/// carrying 7 spline parameters.
fn stage2_layout() -> Vec<usize> {
    let mut dims = vec![4 * PARAMS_PER_CHANNEL; CANONICAL_JOINTS];
    dims[0] = 7 * PARAMS_PER_CHANNEL;
    dims
}

pub fn stage1_config(size: &ModelSize, attention: AttentionMaskSpec) -> ModelConfig {
    ModelConfig {
        input_dim: BEAT_FEATURE_DIM,
        model_dim: size.model_dim,
        encoder_layers: size.encoder_layers,
        encoder_heads: size.encoder_heads,
        feedforward_dim: size.feedforward_dim,
        decoder_layers: size.decoder_layers,
        joint_dim: size.joint_dim,
        joints: CANONICAL_JOINTS,
        token_dims: stage1_layout(),
        head_dims: stage1_layout(),
        attention,
        attention_on_encoder: false,
        causal_encoder: true,
        causal_cross: true,
    }
}

pub fn stage2_config(size: &ModelSize, attention: AttentionMaskSpec) -> ModelConfig {
    // Decoder tokens carry the previous segment's parameters plus both
    // bracketing key poses (7 scalars per joint each).
    let token_dims: Vec<usize> = stage2_layout().iter().map(|d| d + 14).collect();
    ModelConfig {
        input_dim: SEGMENT_FEATURE_DIM,
        model_dim: size.model_dim,
        encoder_layers: size.encoder_layers,
        encoder_heads: size.encoder_heads,
        feedforward_dim: size.feedforward_dim,
        decoder_layers: size.decoder_layers,
        joint_dim: size.joint_dim,
        joints: CANONICAL_JOINTS,
        token_dims,
        head_dims: stage2_layout(),
        attention,
        attention_on_encoder: false,
        causal_encoder: true,
        causal_cross: true,
    }
}

/// Key pose as a decoder token: per joint, position then quaternion
/// (w, x, y, z), matching the per-joint token split.
pub fn keypose_to_token(kp: &KeyPose) -> Vec<f64> {
    let mut out = Vec::with_capacity(KEYPOSE_DIM);
    for j in 0..kp.positions.len() {
        out.extend_from_slice(&kp.positions[j]);
        let q = &kp.rotations[j];
        out.extend_from_slice(&[q.w, q.x, q.y, q.z]);
    }
    out
}

/// Inverse of [`keypose_to_token`]; quaternion blocks are renormalized (a
/// vanishing block decodes to the identity rotation).
pub fn token_to_keypose(token: &[f64]) -> Result<KeyPose> {
    if token.len() != KEYPOSE_DIM {
        return Err(CoreError::Shape(format!(
            "key-pose token must have {KEYPOSE_DIM} scalars, got {}",
            token.len()
        )));
    }
    let mut positions = Vec::with_capacity(CANONICAL_JOINTS);
    let mut rotations = Vec::with_capacity(CANONICAL_JOINTS);
    for j in 0..CANONICAL_JOINTS {
        let c = &token[j * 7..(j + 1) * 7];
        if c.iter().any(|v| !v.is_finite()) {
            return Err(CoreError::Numeric("non-finite key-pose output".into()));
        }
        positions.push([c[0], c[1], c[2]]);
        let norm = (c[3] * c[3] + c[4] * c[4] + c[5] * c[5] + c[6] * c[6]).sqrt();
        rotations.push(if norm < 1e-9 {
            Quaternion::IDENTITY
        } else {
            Quaternion::new(c[3], c[4], c[5], c[6])?
        });
    }
    Ok(KeyPose { positions, rotations })
}

pub struct Stage1Model {
    pub model: SeqModel,
}

pub struct Stage2Model {
    pub model: SeqModel,
}

impl Stage1Model {
    pub fn new(
        store: &mut ParamStore,
        size: &ModelSize,
        attention: AttentionMaskSpec,
        rng: &mut impl Rng,
    ) -> Result<Stage1Model> {
        let topology = SkeletonTopology::default_canonical();
        let model = SeqModel::new(store, stage1_config(size, attention), &topology.parent, rng)?;
        Ok(Stage1Model { model })
    }
}

impl Stage2Model {
    pub fn new(
        store: &mut ParamStore,
        size: &ModelSize,
        attention: AttentionMaskSpec,
        rng: &mut impl Rng,
    ) -> Result<Stage2Model> {
        let topology = SkeletonTopology::default_canonical();
        let model = SeqModel::new(store, stage2_config(size, attention), &topology.parent, rng)?;
        Ok(Stage2Model { model })
    }
}

/// Run the encoder once and freeze the memory as plain data so the
/// autoregressive loop can rebuild cheap tapes per step.
fn frozen_memory(
    model: &SeqModel,
    store: &ParamStore,
    rows: &[f64],
    len: usize,
) -> Result<Vec<f64>> {
    let mut tape = Tape::new();
    let f = tape.constant(&[len, model.config.input_dim], rows.to_vec());
    let mem = model.encode(&mut tape, store, f, Mode::Eval)?;
    Ok(tape.data(mem).to_vec())
}

fn decode_step(
    model: &mut SeqModel,
    store: &ParamStore,
    memory: &[f64],
    mem_len: usize,
    tokens: &[f64],
    steps: usize,
) -> Result<Vec<f64>> {
    let mut tape = Tape::new();
    let mem = tape.constant(&[mem_len, model.config.model_dim], memory.to_vec());
    let toks = tape.constant(&[steps, model.config.token_dim()], tokens.to_vec());
    let out = model
        .decoder
        .forward(&mut tape, store, &model.config, &[mem], &[toks], Mode::Eval)?;
    let out_dim = model.config.output_dim();
    let data = tape.data(out[0]);
    Ok(data[(steps - 1) * out_dim..steps * out_dim].to_vec())
}

/// Greedy autoregressive key-pose generation: one pose per beat feature,
/// starting from a zero token, each prediction fed back as the next input.
pub fn generate_keyposes(
    stage1: &mut Stage1Model,
    store: &ParamStore,
    feats: &[crate::audio::BeatWindowFeature],
) -> Result<Vec<KeyPose>> {
    if feats.is_empty() {
        return Err(CoreError::EmptyInput("no beat features".into()));
    }
    let k = feats.len();
    let rows: Vec<f64> = feats.iter().flat_map(|f| f.values.iter().copied()).collect();
    let memory = frozen_memory(&stage1.model, store, &rows, k)?;

    let mut tokens = vec![0.0; KEYPOSE_DIM]; // start token
    let mut poses = Vec::with_capacity(k);
    for i in 0..k {
        let out = decode_step(&mut stage1.model, store, &memory, k, &tokens, i + 1)?;
        let pose = token_to_keypose(&out)?;
        tokens.extend(keypose_to_token(&pose));
        poses.push(pose);
    }
    Ok(poses)
}

/// Canonical 99-channel values of a key pose (root translation plus local
/// joint rotations), FK-reconciled: only the generated rotations and root
/// position matter, so the curve knots are consistent with the skeleton.
pub fn keypose_channels(topology: &SkeletonTopology, kp: &KeyPose) -> Result<Vec<f64>> {
    Ok(keypose_to_pose(topology, kp)?.to_channels())
}

pub use crate::kinematics::align_channels;

/// Greedy autoregressive curve generation: one token per inter-beat
/// segment, conditioned on the bracketing key poses, with every segment's
/// boundary knots pinned to the key-pose channel values exactly.
pub fn generate_curves(
    stage2: &mut Stage2Model,
    store: &ParamStore,
    topology: &SkeletonTopology,
    seg_feats: &[crate::audio::SegmentFeature],
    keyposes: &[KeyPose],
    beat_times: &[f64],
) -> Result<CurveSet> {
    if keyposes.len() != beat_times.len() {
        return Err(CoreError::InvalidArgument("one key pose per beat required".into()));
    }
    if seg_feats.len() + 1 != keyposes.len() {
        return Err(CoreError::InvalidArgument(format!(
            "{} segment features need {} key poses",
            seg_feats.len(),
            seg_feats.len() + 1
        )));
    }
    if seg_feats.is_empty() {
        return Err(CoreError::EmptyInput("no segments".into()));
    }
    let n_seg = seg_feats.len();
    let rows: Vec<f64> = seg_feats.iter().flat_map(|f| f.values.iter().copied()).collect();
    let memory = frozen_memory(&stage2.model, store, &rows, n_seg)?;

    // Hemisphere-aligned channel values per beat.
    let mut channels: Vec<Vec<f64>> = Vec::with_capacity(keyposes.len());
    for kp in keyposes {
        let mut ch = keypose_channels(topology, kp)?;
        if let Some(prev) = channels.last() {
            align_channels(prev, &mut ch);
        }
        channels.push(ch);
    }

    let kp_tokens: Vec<Vec<f64>> = keyposes.iter().map(keypose_to_token).collect();
    let head_dims = stage2_layout();
    let mut tokens: Vec<f64> = Vec::new();
    let mut raw_params: Vec<Vec<f64>> = Vec::with_capacity(n_seg);
    let mut prev_params = vec![0.0; STAGE2_OUTPUT_DIM];
    for i in 0..n_seg {
        // Per-joint token: previous parameters, key pose i, key pose i+1.
        let mut offset = 0;
        for (j, &hd) in head_dims.iter().enumerate() {
            tokens.extend_from_slice(&prev_params[offset..offset + hd]);
            tokens.extend_from_slice(&kp_tokens[i][j * 7..(j + 1) * 7]);
            tokens.extend_from_slice(&kp_tokens[i + 1][j * 7..(j + 1) * 7]);
            offset += hd;
        }
        let out = decode_step(&mut stage2.model, store, &memory, n_seg, &tokens, i + 1)?;
        prev_params = out.clone();
        raw_params.push(out);
    }

    let mut curves = Vec::with_capacity(CANONICAL_CHANNELS);
    for c in 0..CANONICAL_CHANNELS {
        let mut segments = Vec::with_capacity(n_seg);
        for i in 0..n_seg {
            let raw: [f64; PARAMS_PER_CHANNEL] = raw_params[i]
                [c * PARAMS_PER_CHANNEL..(c + 1) * PARAMS_PER_CHANNEL]
                .try_into()
                .expect("7 params per channel");
            segments.push(decode_segment_params(
                &raw,
                Knot::new(beat_times[i], channels[i][c]),
                Knot::new(beat_times[i + 1], channels[i + 1][c]),
            )?);
        }
        curves.push(MotionCurve::new(c, segments)?);
    }
    CurveSet::new(curves, beat_times.to_vec())
}

/// Teacher-forced Stage-1 training sample: beat features condition the
/// encoder, decoder inputs are the right-shifted key-pose tokens (zero
/// start token), targets are the key-pose tokens themselves.
pub fn stage1_sample(
    feats: &[crate::audio::BeatWindowFeature],
    keyposes: &[KeyPose],
) -> Result<TrainSample> {
    if feats.is_empty() || feats.len() != keyposes.len() {
        return Err(CoreError::InvalidArgument(format!(
            "{} beat features need {} key poses",
            feats.len(),
            feats.len()
        )));
    }
    let len = feats.len();
    let feat_rows: Vec<f64> = feats.iter().flat_map(|f| f.values.iter().copied()).collect();
    let kp_tokens: Vec<Vec<f64>> = keyposes.iter().map(keypose_to_token).collect();
    let mut tokens = vec![0.0; KEYPOSE_DIM];
    for t in &kp_tokens[..len - 1] {
        tokens.extend_from_slice(t);
    }
    let targets: Vec<f64> = kp_tokens.into_iter().flatten().collect();
    Ok(TrainSample { len, feats: feat_rows, tokens, targets })
}

/// Teacher-forced Stage-2 training sample: segment features condition the
/// encoder; the decoder token for segment `i` carries the ground-truth
/// parameters of segment `i-1` (zeros at the start) plus both bracketing
/// key poses, exactly mirroring the autoregressive layout of
/// [`generate_curves`]. `targets` are the raw (pre-squash) parameters,
/// `n_seg x 693` as produced by [`curveset_to_targets`].
pub fn stage2_sample(
    seg_feats: &[crate::audio::SegmentFeature],
    keyposes: &[KeyPose],
    targets: &[f64],
) -> Result<TrainSample> {
    let n_seg = seg_feats.len();
    if n_seg == 0 || keyposes.len() != n_seg + 1 {
        return Err(CoreError::InvalidArgument(format!(
            "{} segment features need {} key poses",
            n_seg,
            n_seg + 1
        )));
    }
    if targets.len() != n_seg * STAGE2_OUTPUT_DIM {
        return Err(CoreError::Shape(format!(
            "expected {} target scalars, got {}",
            n_seg * STAGE2_OUTPUT_DIM,
            targets.len()
        )));
    }
    let feat_rows: Vec<f64> = seg_feats.iter().flat_map(|f| f.values.iter().copied()).collect();
    let kp_tokens: Vec<Vec<f64>> = keyposes.iter().map(keypose_to_token).collect();
    let head_dims = stage2_layout();
    let zeros = vec![0.0; STAGE2_OUTPUT_DIM];
    let mut tokens = Vec::new();
    for i in 0..n_seg {
        let prev = if i == 0 { &zeros[..] } else { &targets[(i - 1) * STAGE2_OUTPUT_DIM..i * STAGE2_OUTPUT_DIM] };
        let mut offset = 0;
        for (j, &hd) in head_dims.iter().enumerate() {
            tokens.extend_from_slice(&prev[offset..offset + hd]);
            tokens.extend_from_slice(&kp_tokens[i][j * 7..(j + 1) * 7]);
            tokens.extend_from_slice(&kp_tokens[i + 1][j * 7..(j + 1) * 7]);
            offset += hd;
        }
    }
    Ok(TrainSample { len: n_seg, feats: feat_rows, tokens, targets: targets.to_vec() })
}

/// Everything a generation run produces besides the sampled motion.
pub struct GenerationResult {
    pub beat_grid: BeatGrid,
    pub key_poses: Vec<KeyPose>,
    pub curves: CurveSet,
}

/// Full music-to-motion path: track beats, featurize, run both stages and
/// sample the curve set at the requested frame rate.
pub fn generate_dance(
    stage1: &mut Stage1Model,
    stage1_store: &ParamStore,
    stage2: &mut Stage2Model,
    stage2_store: &ParamStore,
    topology: &SkeletonTopology,
    wave: &WaveBuffer,
    beat_params: &BeatParams,
    fps: f64,
) -> Result<(GenerationResult, SampledSequence)> {
    let wave = wave.to_analysis_rate();
    let spec = stft(&wave.samples)?;
    let grid = detect_beats(&spec, beat_params)?;
    if grid.beat_times.len() < 2 {
        return Err(CoreError::Degenerate("need at least two tracked beats".into()));
    }
    let feats = beat_features(&spec, &grid.beat_times)?;
    let key_poses = generate_keyposes(stage1, stage1_store, &feats)?;
    let seg_feats = segment_features(&spec, &grid.beat_times)?;
    let curves = generate_curves(
        stage2,
        stage2_store,
        topology,
        &seg_feats,
        &key_poses,
        &grid.beat_times,
    )?;
    let sampled = sample_curveset(&curves, fps)?;
    Ok((GenerationResult { beat_grid: grid, key_poses, curves }, sampled))
}

/// Spline-parameter teacher-forcing target for one ground-truth curve set:
/// `segments x 693` raw (pre-squash) parameters.
pub fn curveset_to_targets(curves: &CurveSet) -> Result<Vec<f64>> {
    let n_seg = curves.beat_times.len() - 1;
    if curves.curves.len() != CANONICAL_CHANNELS {
        return Err(CoreError::Shape(format!(
            "expected {CANONICAL_CHANNELS} channels, got {}",
            curves.curves.len()
        )));
    }
    let mut out = vec![0.0; n_seg * STAGE2_OUTPUT_DIM];
    for (c, curve) in curves.curves.iter().enumerate() {
        for (i, seg) in curve.segments.iter().enumerate() {
            let raw = encode_segment_params(seg);
            out[i * STAGE2_OUTPUT_DIM + c * PARAMS_PER_CHANNEL
                ..i * STAGE2_OUTPUT_DIM + (c + 1) * PARAMS_PER_CHANNEL]
                .copy_from_slice(&raw);
        }
    }
    Ok(out)
}

/// Three-layer perceptron (Linear-ReLU-Linear-ReLU-Linear).
pub struct Mlp {
    l1: Linear,
    l2: Linear,
    l3: Linear,
}

impl Mlp {
    pub fn new(
        store: &mut ParamStore,
        name: &str,
        in_dim: usize,
        hidden: usize,
        out_dim: usize,
        rng: &mut impl Rng,
    ) -> Mlp {
        Mlp {
            l1: Linear::new(store, &format!("{name}.l1"), in_dim, hidden, rng),
            l2: Linear::new(store, &format!("{name}.l2"), hidden, hidden, rng),
            l3: Linear::new(store, &format!("{name}.l3"), hidden, out_dim, rng),
        }
    }

    pub fn forward(&self, tape: &mut Tape, store: &ParamStore, x: Tid) -> Result<Tid> {
        let h = self.l1.forward(tape, store, x)?;
        let h = tape.relu(h);
        let h = self.l2.forward(tape, store, h)?;
        let h = tape.relu(h);
        self.l3.forward(tape, store, h)
    }
}

/// Conditional real/fake classifier: a music branch and a motion branch,
/// each a 3-layer MLP over the mean-pooled sequence concatenated with its
/// length, feeding a 3-layer classifier head.
pub struct Discriminator {
    pub music_dim: usize,
    pub motion_dim: usize,
    music: Mlp,
    motion: Mlp,
    classifier: Mlp,
}

impl Discriminator {
    pub fn new(
        store: &mut ParamStore,
        name: &str,
        music_dim: usize,
        motion_dim: usize,
        hidden: usize,
        rng: &mut impl Rng,
    ) -> Discriminator {
        Discriminator {
            music_dim,
            motion_dim,
            music: Mlp::new(store, &format!("{name}.music"), music_dim + 1, hidden, hidden, rng),
            motion: Mlp::new(store, &format!("{name}.motion"), motion_dim + 1, hidden, hidden, rng),
            classifier: Mlp::new(store, &format!("{name}.classifier"), 2 * hidden, hidden, 1, rng),
        }
    }

    /// One sample's logit from `[L_m, music_dim]` and `[L, motion_dim]` rows.
    pub fn forward(
        &self,
        tape: &mut Tape,
        store: &ParamStore,
        music_rows: Tid,
        motion_rows: Tid,
    ) -> Result<Tid> {
        if tape.shape(music_rows)[1] != self.music_dim
            || tape.shape(motion_rows)[1] != self.motion_dim
        {
            return Err(CoreError::Shape("discriminator input width mismatch".into()));
        }
        let pool = |tape: &mut Tape, rows: Tid| -> Result<Tid> {
            let len = tape.shape(rows)[0] as f64;
            let mean = tape.mean_rows(rows)?;
            let len_feat = tape.constant(&[1, 1], vec![len]);
            tape.concat_cols(&[mean, len_feat])
        };
        let m = pool(tape, music_rows)?;
        let m = self.music.forward(tape, store, m)?;
        let x = pool(tape, motion_rows)?;
        let x = self.motion.forward(tape, store, x)?;
        let joint = tape.concat_cols(&[m, x])?;
        self.classifier.forward(tape, store, joint)
    }
}

/// Training hyperparameters.
#[derive(Debug, Clone)]
pub struct TrainConfig {
    pub batch_size: usize,
    pub total_steps: u64,
    /// Weight of the mean-squared reconstruction loss.
    pub l2_weight: f64,
    pub adversarial_weight: f64,
    pub seed: u64,
    pub schedule: LrSchedule,
}

impl Default for TrainConfig {
    fn default() -> TrainConfig {
        TrainConfig {
            batch_size: 8,
            total_steps: 300_000,
            l2_weight: 10.0,
            adversarial_weight: 1.0,
            seed: 0,
            schedule: LrSchedule::paper_default(),
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.batch_size < 2 {
            return Err(CoreError::InvalidArgument("batch size must be at least 2".into()));
        }
        if self.l2_weight <= 0.0 {
            return Err(CoreError::InvalidArgument("l2 weight must be positive".into()));
        }
        if self.adversarial_weight < 0.0 {
            return Err(CoreError::InvalidArgument("adversarial weight must not be negative".into()));
        }
        Ok(())
    }
}

/// One aligned training pair: conditioning feature rows, the right-shifted
/// decoder input tokens, and the target output rows, all length `len`.
#[derive(Debug, Clone)]
pub struct TrainSample {
    pub len: usize,
    pub feats: Vec<f64>,
    pub tokens: Vec<f64>,
    pub targets: Vec<f64>,
}

/// Loss components of one training step.
#[derive(Debug, Clone, Default)]
pub struct LossReport {
    pub step: u64,
    pub mse: f64,
    pub adversarial: f64,
    pub disc_loss: f64,
    pub disc_accuracy: f64,
    pub lr: f64,
}

/// Generator, discriminator and their optimizers over one shared parameter
/// store, partitioned by index range so either side can be stepped alone.
pub struct GanTrainer {
    pub generator: SeqModel,
    pub discriminator: Discriminator,
    pub store: ParamStore,
    gen_range: std::ops::Range<usize>,
    disc_range: std::ops::Range<usize>,
    adam_gen: AdamState,
    adam_disc: AdamState,
    pub config: TrainConfig,
}

impl GanTrainer {
    pub fn new(
        model_config: ModelConfig,
        parents: &[Option<usize>],
        disc_hidden: usize,
        config: TrainConfig,
        rng: &mut impl Rng,
    ) -> Result<GanTrainer> {
        config.validate()?;
        let mut store = ParamStore::new();
        let generator = SeqModel::new(&mut store, model_config, parents, rng)?;
        let gen_range = 0..store.len();
        let discriminator = Discriminator::new(
            &mut store,
            "disc",
            generator.config.input_dim,
            generator.config.output_dim(),
            disc_hidden,
            rng,
        );
        let disc_range = gen_range.end..store.len();
        let adam_gen = AdamState::new(&store, config.schedule.clone());
        let adam_disc = AdamState::new(&store, config.schedule.clone());
        Ok(GanTrainer {
            generator,
            discriminator,
            store,
            gen_range,
            disc_range,
            adam_gen,
            adam_disc,
            config,
        })
    }

    fn sample_nodes(&self, tape: &mut Tape, sample: &TrainSample) -> (Tid, Tid, Tid) {
        let cfg = &self.generator.config;
        let f = tape.constant(&[sample.len, cfg.input_dim], sample.feats.clone());
        let t = tape.constant(&[sample.len, cfg.token_dim()], sample.tokens.clone());
        let y = tape.constant(&[sample.len, cfg.output_dim()], sample.targets.clone());
        (f, t, y)
    }

    fn check_batch(&self, batch: &[TrainSample]) -> Result<()> {
        if batch.len() < 2 {
            return Err(CoreError::InvalidArgument("need a batch of at least 2".into()));
        }
        let cfg = &self.generator.config;
        for s in batch {
            if s.feats.len() != s.len * cfg.input_dim
                || s.tokens.len() != s.len * cfg.token_dim()
                || s.targets.len() != s.len * cfg.output_dim()
            {
                return Err(CoreError::Shape("training sample extents disagree".into()));
            }
        }
        Ok(())
    }

    /// Discriminator update on real vs teacher-forced generated outputs.
    /// Returns (loss, accuracy).
    pub fn discriminator_step(&mut self, batch: &[TrainSample]) -> Result<(f64, f64)> {
        self.check_batch(batch)?;
        let mut tape = Tape::new();
        let mut feats = Vec::new();
        let mut tokens = Vec::new();
        let mut reals = Vec::new();
        for s in batch {
            let (f, t, y) = self.sample_nodes(&mut tape, s);
            feats.push(f);
            tokens.push(t);
            reals.push(y);
        }
        // The generator is held fixed here: eval mode, and its gradient
        // range is simply never stepped.
        let fakes =
            self.generator
                .forward(&mut tape, &self.store, &feats, &tokens, Mode::Eval)?;
        let mut logits = Vec::new();
        for i in 0..batch.len() {
            logits.push(self.discriminator.forward(&mut tape, &self.store, feats[i], reals[i])?);
        }
        for i in 0..batch.len() {
            logits.push(self.discriminator.forward(&mut tape, &self.store, feats[i], fakes[i])?);
        }
        let stacked = tape.concat_rows(&logits)?;
        let mut labels = vec![1.0; batch.len()];
        labels.extend(vec![0.0; batch.len()]);
        let loss = tape.bce_with_logits(stacked, &labels)?;
        let loss_val = tape.data(loss)[0];
        if !loss_val.is_finite() {
            return Err(CoreError::Numeric("non-finite discriminator loss".into()));
        }
        let correct = tape
            .data(stacked)
            .iter()
            .zip(&labels)
            .filter(|(&z, &l)| (z > 0.0) == (l > 0.5))
            .count();
        tape.backward(loss)?;
        self.store.zero_grads();
        tape.write_param_grads(&mut self.store);
        self.adam_disc.step_range(&mut self.store, self.disc_range.clone());
        self.store.zero_grads();
        Ok((loss_val, correct as f64 / labels.len() as f64))
    }

    /// Generator update: non-saturating adversarial loss plus weighted MSE.
    /// Returns (mse, adversarial loss).
    pub fn generator_step(&mut self, batch: &[TrainSample]) -> Result<(f64, f64)> {
        self.check_batch(batch)?;
        let mut tape = Tape::new();
        let mut feats = Vec::new();
        let mut tokens = Vec::new();
        let mut reals = Vec::new();
        for s in batch {
            let (f, t, y) = self.sample_nodes(&mut tape, s);
            feats.push(f);
            tokens.push(t);
            reals.push(y);
        }
        let preds =
            self.generator
                .forward(&mut tape, &self.store, &feats, &tokens, Mode::Train)?;

        let pred_all = tape.concat_rows(&preds)?;
        let real_all = tape.concat_rows(&reals)?;
        let diff = tape.sub(pred_all, real_all)?;
        let sq = tape.mul(diff, diff)?;
        let mse = tape.mean_all(sq);

        let total = if self.config.adversarial_weight > 0.0 {
            let mut logits = Vec::new();
            for i in 0..batch.len() {
                logits.push(self.discriminator.forward(
                    &mut tape,
                    &self.store,
                    feats[i],
                    preds[i],
                )?);
            }
            let stacked = tape.concat_rows(&logits)?;
            let adv = tape.bce_with_logits(stacked, &vec![1.0; batch.len()])?;
            let weighted_mse = tape.scale(mse, self.config.l2_weight);
            let weighted_adv = tape.scale(adv, self.config.adversarial_weight);
            let total = tape.add(weighted_mse, weighted_adv)?;
            (total, Some(adv))
        } else {
            (tape.scale(mse, self.config.l2_weight), None)
        };
        let (total, adv) = total;
        let mse_val = tape.data(mse)[0];
        let adv_val = adv.map(|a| tape.data(a)[0]).unwrap_or(0.0);
        if !mse_val.is_finite() {
            return Err(CoreError::Numeric("non-finite reconstruction loss".into()));
        }
        if !adv_val.is_finite() {
            return Err(CoreError::Numeric("non-finite adversarial loss".into()));
        }
        tape.backward(total)?;
        self.store.zero_grads();
        tape.write_param_grads(&mut self.store);
        self.adam_gen.step_range(&mut self.store, self.gen_range.clone());
        self.store.zero_grads();
        Ok((mse_val, adv_val))
    }

    /// One full adversarial training step: discriminator update, then
    /// generator update.
    pub fn train_step(&mut self, batch: &[TrainSample]) -> Result<LossReport> {
        let (disc_loss, disc_accuracy) = if self.config.adversarial_weight > 0.0 {
            self.discriminator_step(batch)?
        } else {
            (0.0, 0.0)
        };
        let (mse, adversarial) = self.generator_step(batch)?;
        Ok(LossReport {
            step: self.adam_gen.step,
            mse,
            adversarial,
            disc_loss,
            disc_accuracy,
            lr: self.config.schedule.lr_at(self.adam_gen.step.saturating_sub(1)),
        })
    }

    /// Teacher-forced MSE without any parameter update.
    pub fn teacher_forced_loss(&mut self, batch: &[TrainSample]) -> Result<f64> {
        self.check_batch(batch)?;
        let mut tape = Tape::new();
        let mut feats = Vec::new();
        let mut tokens = Vec::new();
        let mut reals = Vec::new();
        for s in batch {
            let (f, t, y) = self.sample_nodes(&mut tape, s);
            feats.push(f);
            tokens.push(t);
            reals.push(y);
        }
        let preds =
            self.generator
                .forward(&mut tape, &self.store, &feats, &tokens, Mode::Eval)?;
        let pred_all = tape.concat_rows(&preds)?;
        let real_all = tape.concat_rows(&reals)?;
        let diff = tape.sub(pred_all, real_all)?;
        let sq = tape.mul(diff, diff)?;
        let mse = tape.mean_all(sq);
        Ok(tape.data(mse)[0])
    }

    /// Index ranges exposed for update-isolation tests.
    pub fn param_ranges(&self) -> (std::ops::Range<usize>, std::ops::Range<usize>) {
        (self.gen_range.clone(), self.disc_range.clone())
    }
}
