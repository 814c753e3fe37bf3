//! Implementations behind every CLI subcommand. Each returns `Ok(())` on
//! success or a [`ToolError`] carrying the exit-code class.

use std::io::Write as _;
use std::path::{Path, PathBuf};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use dancegen_core::audio::{
    beat_features, detect_beats, segment_features, stft, BeatParams, Spectrogram,
};
use dancegen_core::model::AttentionMaskSpec;
use dancegen_core::curves::{fit_curveset, sample_curveset};
use dancegen_core::kinematics::{
    pose_to_keypose, PoseSequence, SkeletonTopology, CANONICAL_CHANNELS,
};
use dancegen_core::metrics::{
    beat_consistency, kinematic_beats, npss, pfd_vfd, pose_variance, BC_SIGMA_SEC,
};
use dancegen_core::nn::params::ParamStore;
use dancegen_core::pipeline::{
    curveset_to_targets, generate_dance, keypose_to_token, stage1_config, stage1_sample,
    stage2_config, stage2_sample, GanTrainer, Stage1Model, Stage2Model, TrainSample,
};

use crate::checkpoint::{read_checkpoint, write_checkpoint, Checkpoint, SizeTag};
use crate::config::TrainSettings;
use crate::error::{in_file, Result, ToolError};
use crate::manifest::{DatasetManifest, Split};
use crate::motionfile::{read_motion_file, write_motion_file, MotionFile};
use crate::posefile::{import_pose_sequence, write_pose_sequence};
use crate::wav::read_wav;

fn analysis_spectrogram(audio: &Path) -> Result<Spectrogram> {
    let wave = read_wav(audio)?.to_analysis_rate();
    stft(&wave.samples).map_err(Into::into)
}

/// `beats`: track the beat grid of a WAV and write it as text
/// (`bpm <x>` then one beat time per line).
pub fn cmd_beats(audio: &Path, out: &Path) -> Result<()> {
    let spec = analysis_spectrogram(audio)?;
    let grid = detect_beats(&spec, &BeatParams::default())?;
    let mut text = format!("bpm {}\n", grid.bpm);
    for t in &grid.beat_times {
        text.push_str(&format!("{t}\n"));
    }
    std::fs::write(out, text).map_err(|e| in_file(out, e))?;
    println!("tracked {} beats at {:.2} bpm", grid.beat_times.len(), grid.bpm);
    Ok(())
}

pub fn read_beats_file(path: &Path) -> Result<(f64, Vec<f64>)> {
    let text = std::fs::read_to_string(path).map_err(|e| in_file(path, e))?;
    let mut lines = text.lines();
    let bpm: f64 = lines
        .next()
        .and_then(|l| l.strip_prefix("bpm "))
        .and_then(|v| v.parse().ok())
        .ok_or_else(|| in_file(path, "missing bpm header"))?;
    let beats: Vec<f64> = lines
        .filter(|l| !l.trim().is_empty())
        .map(|l| l.trim().parse::<f64>())
        .collect::<std::result::Result<_, _>>()
        .map_err(|_| in_file(path, "unreadable beat time"))?;
    if beats.len() < 2 {
        return Err(in_file(path, "fewer than two beats"));
    }
    Ok((bpm, beats))
}

#[derive(Serialize)]
struct FeatureDump {
    bpm: f64,
    beat_times: Vec<f64>,
    beat_features: Vec<Vec<f64>>,
    segment_features: Vec<Vec<f64>>,
}

/// `features`: beat-window and segment features of a WAV as JSON.
pub fn cmd_features(audio: &Path, out: &Path) -> Result<()> {
    let spec = analysis_spectrogram(audio)?;
    let grid = detect_beats(&spec, &BeatParams::default())?;
    let bf = beat_features(&spec, &grid.beat_times)?;
    let sf = segment_features(&spec, &grid.beat_times)?;
    let dump = FeatureDump {
        bpm: grid.bpm,
        beat_times: grid.beat_times.clone(),
        beat_features: bf.iter().map(|f| f.values.to_vec()).collect(),
        segment_features: sf.iter().map(|f| f.values.to_vec()).collect(),
    };
    let text = serde_json::to_string_pretty(&dump).expect("feature dump serializes");
    std::fs::write(out, text).map_err(|e| in_file(out, e))?;
    println!("wrote {} beat rows and {} segment rows", dump.beat_features.len(), dump.segment_features.len());
    Ok(())
}

/// `fit`: fit TCB motion curves of a dense pose sequence against a beat
/// grid, writing a motion file.
pub fn cmd_fit(pose: &Path, beats: &Path, out: &Path) -> Result<()> {
    let import = import_pose_sequence(pose)?;
    if import.renormalized_rows > 0 {
        eprintln!("warning: renormalized quaternions on {} rows", import.renormalized_rows);
    }
    let (_, beat_times) = read_beats_file(beats)?;
    let topology = SkeletonTopology::default_canonical();
    let fit = fit_curveset(&topology, &import.sequence, &beat_times)?;
    let worst = fit.residuals.iter().map(|r| r.max_rmse).fold(0.0, f64::max);
    let m = MotionFile::new(
        import.sequence.fps,
        pose.file_name().map(|n| n.to_string_lossy().into_owned()).unwrap_or_else(|| "none".into()),
        fit.key_poses,
        fit.curves,
    )?;
    write_motion_file(&m, out)?;
    println!(
        "fit {} channels over {} segments, worst channel rmse {worst:.3e}",
        CANONICAL_CHANNELS,
        m.beat_times().len() - 1
    );
    Ok(())
}

/// `sample`: densely sample a motion file at a fixed FPS into a pose file.
pub fn cmd_sample(motion: &Path, fps: f64, out: &Path) -> Result<()> {
    if fps <= 0.0 {
        return Err(ToolError::Usage("--fps must be positive".into()));
    }
    let m = read_motion_file(motion)?;
    let sampled = sample_curveset(&m.curves, fps)?;
    write_pose_sequence(&sampled.sequence, out)?;
    println!("sampled {} frames at {fps} fps", sampled.sequence.frames.len());
    Ok(())
}

/// `inspect`: print the structural counts of a motion file.
pub fn cmd_inspect(motion: &Path) -> Result<()> {
    let m = read_motion_file(motion)?;
    let beats = m.beat_times();
    println!("format version 1");
    println!("fps-hint {}", m.fps_hint);
    println!("audio-fingerprint {}", m.audio_fingerprint);
    println!("beats {}", beats.len());
    println!("keyposes {}", m.key_poses.len());
    println!("channels {}", m.curves.curves.len());
    println!("segments {}", beats.len() - 1);
    println!("span {:.3}s .. {:.3}s", beats[0], beats[beats.len() - 1]);
    Ok(())
}

/// Builds teacher-forced samples for one manifest entry.
fn entry_samples(stage: u8, audio: &Path, motion: &Path) -> Result<TrainSample> {
    let m = read_motion_file(motion)?;
    let spec = analysis_spectrogram(audio)?;
    if stage == 1 {
        let bf = beat_features(&spec, m.beat_times())?;
        stage1_sample(&bf, &m.key_poses).map_err(Into::into)
    } else {
        let sf = segment_features(&spec, m.beat_times())?;
        let targets = curveset_to_targets(&m.curves)?;
        stage2_sample(&sf, &m.key_poses, &targets).map_err(Into::into)
    }
}

#[derive(Serialize)]
struct MetricsLine {
    step: u64,
    mse: f64,
    adversarial: f64,
    disc_loss: f64,
    disc_accuracy: f64,
    lr: f64,
}

/// `train`: both-stage GAN training over a manifest's train split, with a
/// JSONL metrics log and a final checkpoint under `out`.
pub fn cmd_train(stage: u8, data: &Path, config: &Path, out_dir: &Path, size_override: Option<SizeTag>) -> Result<()> {
    if !(1..=2).contains(&stage) {
        return Err(ToolError::Usage(format!("--stage must be 1 or 2, got {stage}")));
    }
    let settings = {
        let mut s = TrainSettings::load(config)?;
        if let Some(size) = size_override {
            s.size = size;
        }
        s
    };
    let manifest = DatasetManifest::load(data)?;
    let entries = manifest.split(Split::Train);
    if entries.is_empty() {
        return Err(ToolError::Data(format!("{}: no train-split entries", data.display())));
    }
    let mut samples = Vec::with_capacity(entries.len());
    for e in &entries {
        samples.push(entry_samples(stage, &e.audio, &e.motion)?);
    }

    std::fs::create_dir_all(out_dir).map_err(|e| in_file(out_dir, e))?;
    let log_path = out_dir.join(format!("stage{stage}-metrics.jsonl"));
    let mut log = std::fs::File::create(&log_path).map_err(|e| in_file(&log_path, e))?;

    let topology = SkeletonTopology::default_canonical();
    let size = settings.size.to_model_size();
    let model_config = match stage {
        1 => stage1_config(&size, AttentionMaskSpec::default()),
        _ => stage2_config(&size, AttentionMaskSpec::default()),
    };
    let train_config = settings.to_train_config();
    let mut rng = ChaCha8Rng::seed_from_u64(train_config.seed);
    let mut trainer = GanTrainer::new(
        model_config,
        &topology.parent,
        settings.discriminator_hidden,
        train_config,
        &mut rng,
    )?;

    let mut batch_rng = ChaCha8Rng::seed_from_u64(trainer.config.seed ^ 0x9e37_79b9_7f4a_7c15);
    let batch_size = trainer.config.batch_size;
    let total = trainer.config.total_steps;
    for step in 0..total {
        let batch: Vec<TrainSample> = (0..batch_size)
            .map(|_| samples[rand::Rng::gen_range(&mut batch_rng, 0..samples.len())].clone())
            .collect();
        let report = trainer.train_step(&batch)?;
        if step % settings.log_every == 0 || step + 1 == total {
            let line = MetricsLine {
                step: report.step,
                mse: report.mse,
                adversarial: report.adversarial,
                disc_loss: report.disc_loss,
                disc_accuracy: report.disc_accuracy,
                lr: report.lr,
            };
            writeln!(log, "{}", serde_json::to_string(&line).expect("metrics line serializes"))
                .map_err(|e| in_file(&log_path, e))?;
        }
    }

    let ckpt_path = out_dir.join(format!("stage{stage}.ckpt"));
    write_checkpoint(
        &Checkpoint { stage, size: settings.size, step: total, store: trainer.store },
        &ckpt_path,
    )?;
    println!("trained stage {stage} for {total} steps; checkpoint at {}", ckpt_path.display());
    Ok(())
}

/// Checks that `got` (a checkpoint store, possibly with a discriminator
/// tail) starts with the generator parameters `expect` describes.
fn check_store_prefix(expect: &ParamStore, got: &ParamStore, path: &Path) -> Result<()> {
    if got.len() < expect.len() {
        return Err(in_file(path, format!(
            "checkpoint holds {} parameters, model needs {}",
            got.len(),
            expect.len()
        )));
    }
    for i in 0..expect.len() {
        let (e, g) = (expect.entry(i), got.entry(i));
        if e.name != g.name || e.shape != g.shape {
            return Err(in_file(path, format!(
                "checkpoint parameter {i} is {} {:?}, model expects {} {:?}",
                g.name, g.shape, e.name, e.shape
            )));
        }
    }
    Ok(())
}

/// `generate`: full music-to-motion generation from two checkpoints.
pub fn cmd_generate(
    audio: &Path,
    stage1_path: &Path,
    stage2_path: &Path,
    out: &Path,
    fps: f64,
    pose_out: Option<&Path>,
    seed: u64,
) -> Result<()> {
    if fps <= 0.0 {
        return Err(ToolError::Usage("--fps must be positive".into()));
    }
    let c1 = read_checkpoint(stage1_path)?;
    let c2 = read_checkpoint(stage2_path)?;
    if c1.stage != 1 {
        return Err(in_file(stage1_path, format!("checkpoint is for stage {}", c1.stage)));
    }
    if c2.stage != 2 {
        return Err(in_file(stage2_path, format!("checkpoint is for stage {}", c2.stage)));
    }

    // Model structure is deterministic; the rng only populates the scratch
    // stores whose values are immediately replaced by the checkpoints.
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut scratch1 = ParamStore::new();
    let mut stage1 =
        Stage1Model::new(&mut scratch1, &c1.size.to_model_size(), AttentionMaskSpec::default(), &mut rng)?;
    check_store_prefix(&scratch1, &c1.store, stage1_path)?;
    let mut scratch2 = ParamStore::new();
    let mut stage2 =
        Stage2Model::new(&mut scratch2, &c2.size.to_model_size(), AttentionMaskSpec::default(), &mut rng)?;
    check_store_prefix(&scratch2, &c2.store, stage2_path)?;

    let topology = SkeletonTopology::default_canonical();
    let wave = read_wav(audio)?;
    let (result, sampled) = generate_dance(
        &mut stage1,
        &c1.store,
        &mut stage2,
        &c2.store,
        &topology,
        &wave,
        &BeatParams::default(),
        fps,
    )?;
    let m = MotionFile::new(
        fps,
        audio.file_name().map(|n| n.to_string_lossy().into_owned()).unwrap_or_else(|| "none".into()),
        result.key_poses,
        result.curves,
    )?;
    write_motion_file(&m, out)?;
    if let Some(p) = pose_out {
        write_pose_sequence(&sampled.sequence, p)?;
    }
    println!(
        "generated {} key poses over {:.2}s at {:.2} bpm",
        m.key_poses.len(),
        m.beat_times().last().unwrap() - m.beat_times()[0],
        result.beat_grid.bpm
    );
    Ok(())
}

#[derive(Serialize)]
struct PairDiagnostics {
    name: String,
    frames: usize,
    npss: f64,
    beat_consistency: f64,
}

#[derive(Serialize)]
struct EvalReport {
    pairs: usize,
    fps: f64,
    npss: f64,
    pfd: f64,
    vfd: f64,
    pose_variance: Option<f64>,
    pose_variance_note: Option<String>,
    beat_consistency: f64,
    per_pair: Vec<PairDiagnostics>,
}

fn joint_motion_rows(topology: &SkeletonTopology, seq: &PoseSequence) -> Result<Vec<f64>> {
    let mut rows = Vec::with_capacity(seq.frames.len() * 168);
    for pose in &seq.frames {
        rows.extend(keypose_to_token(&pose_to_keypose(topology, pose)?));
    }
    Ok(rows)
}

fn pose_files_in(dir: &Path) -> Result<Vec<PathBuf>> {
    let mut files: Vec<PathBuf> = std::fs::read_dir(dir)
        .map_err(|e| in_file(dir, e))?
        .filter_map(|e| e.ok())
        .map(|e| e.path())
        .filter(|p| p.is_file())
        .collect();
    files.sort();
    if files.is_empty() {
        return Err(in_file(dir, "no pose files"));
    }
    Ok(files)
}

/// `evaluate`: the full metric suite over paired ground-truth and
/// prediction pose directories (matched by file name).
pub fn cmd_evaluate(gt_dir: &Path, pred_dir: &Path, fps: f64, out: &Path) -> Result<()> {
    let topology = SkeletonTopology::default_canonical();
    let gt_files = pose_files_in(gt_dir)?;

    let mut gt_seqs = Vec::new();
    let mut pred_seqs = Vec::new();
    let mut per_pair = Vec::new();
    for gt_path in &gt_files {
        let name = gt_path.file_name().unwrap().to_string_lossy().into_owned();
        let pred_path = pred_dir.join(&name);
        if !pred_path.is_file() {
            return Err(ToolError::Data(format!(
                "prediction for {name} missing under {}",
                pred_dir.display()
            )));
        }
        let gt = import_pose_sequence(gt_path)?.sequence;
        let pred = import_pose_sequence(&pred_path)?.sequence;

        // NPSS needs equal shapes; compare over the common prefix.
        let frames = gt.frames.len().min(pred.frames.len());
        if frames < 4 {
            return Err(ToolError::Data(format!("{name}: too few frames for NPSS ({frames})")));
        }
        let mut gt_trim = gt.clone();
        gt_trim.frames.truncate(frames);
        let mut pred_trim = pred.clone();
        pred_trim.frames.truncate(frames);
        let gt_rows = joint_motion_rows(&topology, &gt_trim)?;
        let pred_rows = joint_motion_rows(&topology, &pred_trim)?;
        let pair_npss = npss(&gt_rows, &pred_rows, frames, 168)?;

        let music = kinematic_beats(&topology, &gt)?;
        let motion = kinematic_beats(&topology, &pred)?;
        let pair_bc = beat_consistency(&music, &motion, BC_SIGMA_SEC)?;

        per_pair.push(PairDiagnostics { name, frames, npss: pair_npss, beat_consistency: pair_bc });
        gt_seqs.push(gt);
        pred_seqs.push(pred);
    }

    let (pfd, vfd) = pfd_vfd(&topology, &gt_seqs, &pred_seqs)?;
    let (pvar, pvar_note) = if pred_seqs.len() >= 2 {
        match pose_variance(&topology, &pred_seqs) {
            Ok(v) => (Some(v), None),
            Err(e) => (None, Some(e.to_string())),
        }
    } else {
        (None, Some("needs at least two predictions of identical length".into()))
    };
    let mean = |f: &dyn Fn(&PairDiagnostics) -> f64| {
        per_pair.iter().map(|p| f(p)).sum::<f64>() / per_pair.len() as f64
    };
    let report = EvalReport {
        pairs: per_pair.len(),
        fps,
        npss: mean(&|p| p.npss),
        pfd,
        vfd,
        pose_variance: pvar,
        pose_variance_note: pvar_note,
        beat_consistency: mean(&|p| p.beat_consistency),
        per_pair,
    };
    let text = serde_json::to_string_pretty(&report).expect("report serializes");
    std::fs::write(out, &text).map_err(|e| in_file(out, e))?;
    println!(
        "npss {:.4}  pfd {:.4}  vfd {:.4}  pvar {}  bc {:.4}",
        report.npss,
        report.pfd,
        report.vfd,
        report.pose_variance.map_or("n/a".into(), |v| format!("{v:.4}")),
        report.beat_consistency
    );
    Ok(())
}
