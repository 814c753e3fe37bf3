//! Evaluation metrics: spectral similarity (NPSS), Fréchet distances over
//! pose and velocity statistics, pose variance, and music/motion beat
//! consistency.

use nalgebra::DMatrix;
use rustfft::num_complex::Complex;
use rustfft::FftPlanner;

use crate::error::{CoreError, Result};
use crate::kinematics::{forward_kinematics, PoseSequence, SkeletonTopology};

/// Seconds corresponding to the 3-frame beat tolerance at 60 FPS.
pub const BC_SIGMA_SEC: f64 = 3.0 / 60.0;

/// Normalized power spectrum similarity. Both sequences are `frames x dims`
/// row-major and must agree in both extents. Per dimension, the power in the
/// positive-frequency DFT bins is normalized to a distribution and compared
/// via the 1-d earth-mover's distance (absolute CDF difference); dimensions
/// are averaged weighted by the ground truth's unnormalized power.
pub fn npss(gt: &[f64], pred: &[f64], frames: usize, dims: usize) -> Result<f64> {
    if gt.len() != frames * dims || pred.len() != frames * dims {
        return Err(CoreError::Shape("npss inputs must be frames x dims".into()));
    }
    if frames < 4 || dims == 0 {
        return Err(CoreError::EmptyInput("npss needs at least four frames".into()));
    }
    let bins = frames / 2;
    let fft = FftPlanner::new().plan_fft_forward(frames);
    let spectrum = |series: &[f64], d: usize| -> Vec<f64> {
        let mut buf: Vec<Complex<f64>> = (0..frames)
            .map(|t| Complex::new(series[t * dims + d], 0.0))
            .collect();
        fft.process(&mut buf);
        (1..=bins).map(|b| buf[b].norm_sqr()).collect()
    };

    let mut weighted = 0.0;
    let mut total_weight = 0.0;
    for d in 0..dims {
        let pg = spectrum(gt, d);
        let pp = spectrum(pred, d);
        let sg: f64 = pg.iter().sum();
        let sp: f64 = pp.iter().sum();
        if sg <= 1e-12 {
            continue; // constant ground-truth channel carries no weight
        }
        let mut cg = 0.0;
        let mut cp = 0.0;
        let mut emd = 0.0;
        for b in 0..bins {
            cg += pg[b] / sg;
            cp += if sp > 1e-12 { pp[b] / sp } else { 0.0 };
            emd += (cg - cp).abs();
        }
        weighted += sg * emd;
        total_weight += sg;
    }
    if total_weight <= 0.0 {
        return Err(CoreError::Degenerate("ground truth has no spectral power".into()));
    }
    Ok(weighted / total_weight)
}

/// Mean and covariance of row samples (`n x d`).
#[derive(Debug, Clone)]
pub struct GaussianStats {
    pub dim: usize,
    pub mean: Vec<f64>,
    /// Row-major `d x d` covariance (population normalization).
    pub cov: Vec<f64>,
}

impl GaussianStats {
    pub fn from_rows(rows: &[f64], n: usize, dim: usize) -> Result<GaussianStats> {
        if rows.len() != n * dim || dim == 0 {
            return Err(CoreError::Shape("stats need a non-empty n x d sample".into()));
        }
        if n < 2 {
            return Err(CoreError::EmptyInput("need at least two samples for covariance".into()));
        }
        let mut mean = vec![0.0; dim];
        for r in 0..n {
            for d in 0..dim {
                mean[d] += rows[r * dim + d];
            }
        }
        for m in &mut mean {
            *m /= n as f64;
        }
        let mut cov = vec![0.0; dim * dim];
        for r in 0..n {
            for i in 0..dim {
                let di = rows[r * dim + i] - mean[i];
                for j in 0..dim {
                    cov[i * dim + j] += di * (rows[r * dim + j] - mean[j]);
                }
            }
        }
        for c in &mut cov {
            *c /= (n - 1) as f64;
        }
        // Rank-deficient sample sets get a small diagonal load so the matrix
        // square root stays well-conditioned.
        if n < dim {
            for i in 0..dim {
                cov[i * dim + i] += 1e-6;
            }
        }
        Ok(GaussianStats { dim, mean, cov })
    }
}

/// Symmetric PSD square root via eigendecomposition, negative eigenvalues
/// clamped to zero.
fn sqrtm_psd(m: &DMatrix<f64>) -> DMatrix<f64> {
    let sym = (m + m.transpose()) * 0.5;
    let eig = sym.symmetric_eigen();
    let sqrt_vals = DMatrix::from_diagonal(&eig.eigenvalues.map(|v| v.max(0.0).sqrt()));
    &eig.eigenvectors * sqrt_vals * eig.eigenvectors.transpose()
}

/// Fréchet distance between two Gaussians:
/// `|mu1-mu2|^2 + tr(S1 + S2 - 2 (S1^{1/2} S2 S1^{1/2})^{1/2})`.
pub fn frechet_distance(a: &GaussianStats, b: &GaussianStats) -> Result<f64> {
    if a.dim != b.dim {
        return Err(CoreError::Shape("Frechet distance needs equal dims".into()));
    }
    let d = a.dim;
    let mean_term: f64 = (0..d).map(|i| (a.mean[i] - b.mean[i]).powi(2)).sum();
    let s1 = DMatrix::from_row_slice(d, d, &a.cov);
    let s2 = DMatrix::from_row_slice(d, d, &b.cov);
    let root1 = sqrtm_psd(&s1);
    let inner = sqrtm_psd(&(&root1 * &s2 * &root1));
    let trace = s1.trace() + s2.trace() - 2.0 * inner.trace();
    let fd = mean_term + trace;
    if !fd.is_finite() {
        return Err(CoreError::Numeric("non-finite Frechet distance".into()));
    }
    // Numerical noise can push a true zero slightly negative.
    Ok(fd.max(0.0))
}

/// Per-frame global joint positions, `frames x (joints*3)` row-major.
pub fn position_features(topology: &SkeletonTopology, seq: &PoseSequence) -> Result<Vec<f64>> {
    let joints = topology.joint_count();
    let mut out = Vec::with_capacity(seq.frames.len() * joints * 3);
    for pose in &seq.frames {
        let (fk_positions, _) = forward_kinematics(topology, pose)?;
        for p in &fk_positions {
            out.extend_from_slice(p);
        }
    }
    Ok(out)
}

/// Frame-difference velocities of position features, `(frames-1) x dim`.
pub fn velocity_features(positions: &[f64], frames: usize, dim: usize, fps: f64) -> Result<Vec<f64>> {
    if frames < 2 {
        return Err(CoreError::EmptyInput("need two frames for velocities".into()));
    }
    let mut out = Vec::with_capacity((frames - 1) * dim);
    for t in 0..frames - 1 {
        for d in 0..dim {
            out.push((positions[(t + 1) * dim + d] - positions[t * dim + d]) * fps);
        }
    }
    Ok(out)
}

/// Pose and velocity Fréchet distances between two collections of motion
/// sequences, over 72-d global joint position (and velocity) frames.
pub fn pfd_vfd(
    topology: &SkeletonTopology,
    real: &[PoseSequence],
    generated: &[PoseSequence],
) -> Result<(f64, f64)> {
    let dim = topology.joint_count() * 3;
    let collect = |seqs: &[PoseSequence]| -> Result<(Vec<f64>, Vec<f64>)> {
        let mut pos = Vec::new();
        let mut vel = Vec::new();
        for seq in seqs {
            let p = position_features(topology, seq)?;
            vel.extend(velocity_features(&p, seq.frames.len(), dim, seq.fps)?);
            pos.extend(p);
        }
        Ok((pos, vel))
    };
    let (rp, rv) = collect(real)?;
    let (gp, gv) = collect(generated)?;
    let pfd = frechet_distance(
        &GaussianStats::from_rows(&rp, rp.len() / dim, dim)?,
        &GaussianStats::from_rows(&gp, gp.len() / dim, dim)?,
    )?;
    let vfd = frechet_distance(
        &GaussianStats::from_rows(&rv, rv.len() / dim, dim)?,
        &GaussianStats::from_rows(&gv, gv.len() / dim, dim)?,
    )?;
    Ok((pfd, vfd))
}

/// Pose variance: at each (frame, joint, axis) cell of the global position
/// features, the population variance across the sequence set, averaged over
/// all cells. All sequences must have the same frame count.
pub fn pose_variance(topology: &SkeletonTopology, seqs: &[PoseSequence]) -> Result<f64> {
    if seqs.len() < 2 {
        return Err(CoreError::EmptyInput("need at least two sequences for pose variance".into()));
    }
    let frames = seqs[0].frames.len();
    if frames == 0 {
        return Err(CoreError::EmptyInput("empty sequence".into()));
    }
    if seqs.iter().any(|s| s.frames.len() != frames) {
        return Err(CoreError::InvalidArgument(
            "pose variance needs equal-length sequences".into(),
        ));
    }
    let dim = topology.joint_count() * 3;
    let cells = frames * dim;
    let mut feats = Vec::with_capacity(seqs.len());
    for seq in seqs {
        feats.push(position_features(topology, seq)?);
    }
    let n = seqs.len() as f64;
    let mut acc = 0.0;
    for c in 0..cells {
        let mean: f64 = feats.iter().map(|f| f[c]).sum::<f64>() / n;
        acc += feats.iter().map(|f| (f[c] - mean).powi(2)).sum::<f64>() / n;
    }
    Ok(acc / cells as f64)
}

/// Gaussian smoothing of a 1-d series, kernel truncated at four sigma.
fn gaussian_smooth(x: &[f64], sigma: f64) -> Vec<f64> {
    let radius = (4.0 * sigma).ceil() as isize;
    let kernel: Vec<f64> = (-radius..=radius)
        .map(|k| (-0.5 * (k as f64 / sigma).powi(2)).exp())
        .collect();
    let ksum: f64 = kernel.iter().sum();
    let n = x.len() as isize;
    (0..n)
        .map(|t| {
            let mut acc = 0.0;
            for (ki, k) in (-radius..=radius).enumerate() {
                let idx = (t + k).clamp(0, n - 1) as usize;
                acc += kernel[ki] * x[idx];
            }
            acc / ksum
        })
        .collect()
}

/// Kinematic beats: local minima of the smoothed mean joint speed
/// (Gaussian smoothing, sigma two frames). Returns beat times in seconds.
pub fn kinematic_beats(topology: &SkeletonTopology, seq: &PoseSequence) -> Result<Vec<f64>> {
    let n = seq.frames.len();
    if n < 3 {
        return Err(CoreError::EmptyInput("too few frames for kinematic beats".into()));
    }
    let dim = topology.joint_count() * 3;
    let pos = position_features(topology, seq)?;
    let joints = topology.joint_count();
    let speed: Vec<f64> = (0..n - 1)
        .map(|t| {
            let mut acc = 0.0;
            for j in 0..joints {
                let mut d2 = 0.0;
                for c in 0..3 {
                    let d = pos[(t + 1) * dim + j * 3 + c] - pos[t * dim + j * 3 + c];
                    d2 += d * d;
                }
                acc += d2.sqrt();
            }
            acc / joints as f64 * seq.fps
        })
        .collect();
    let smooth = gaussian_smooth(&speed, 2.0);
    let mut beats = Vec::new();
    for t in 1..smooth.len() - 1 {
        if smooth[t] < smooth[t - 1] && smooth[t] < smooth[t + 1] {
            // Speed sample t spans frames t..t+1; place the beat between.
            beats.push(seq.start_time + (t as f64 + 0.5) / seq.fps);
        }
    }
    Ok(beats)
}

/// Beat consistency: mean over music beats of a Gaussian score of the
/// distance to the nearest kinematic beat, `sigma` in seconds.
pub fn beat_consistency(music_beats: &[f64], motion_beats: &[f64], sigma: f64) -> Result<f64> {
    if music_beats.is_empty() || motion_beats.is_empty() {
        return Err(CoreError::EmptyInput("need beats on both sides".into()));
    }
    if sigma <= 0.0 {
        return Err(CoreError::InvalidArgument("sigma must be positive".into()));
    }
    let score: f64 = music_beats
        .iter()
        .map(|&tb| {
            let nearest = motion_beats
                .iter()
                .map(|&tk| (tk - tb).abs())
                .fold(f64::INFINITY, f64::min);
            (-nearest * nearest / (2.0 * sigma * sigma)).exp()
        })
        .sum();
    Ok(score / music_beats.len() as f64)
}
