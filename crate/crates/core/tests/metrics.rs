//! Metric correctness against independent brute-force oracles and closed
//! forms on small instances.

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use dancegen_core::kinematics::{Pose, PoseSequence, Quaternion, SkeletonTopology};
use dancegen_core::metrics::{
    beat_consistency, frechet_distance, kinematic_beats, npss, pfd_vfd, pose_variance,
    GaussianStats, BC_SIGMA_SEC,
};

/// Naive O(n^2) DFT power in positive-frequency bins 1..=n/2.
fn dft_power(series: &[f64]) -> Vec<f64> {
    let n = series.len();
    (1..=n / 2)
        .map(|k| {
            let (mut re, mut im) = (0.0, 0.0);
            for (t, &x) in series.iter().enumerate() {
                let ang = -2.0 * std::f64::consts::PI * k as f64 * t as f64 / n as f64;
                re += x * ang.cos();
                im += x * ang.sin();
            }
            re * re + im * im
        })
        .collect()
}

/// Brute-force NPSS re-derivation for the oracle: normalized spectra, EMD as
/// summed absolute CDF difference, power-weighted average over dims.
fn npss_oracle(gt: &[f64], pred: &[f64], frames: usize, dims: usize) -> f64 {
    let mut weighted = 0.0;
    let mut total = 0.0;
    for d in 0..dims {
        let g: Vec<f64> = (0..frames).map(|t| gt[t * dims + d]).collect();
        let p: Vec<f64> = (0..frames).map(|t| pred[t * dims + d]).collect();
        let pg = dft_power(&g);
        let pp = dft_power(&p);
        let sg: f64 = pg.iter().sum();
        let sp: f64 = pp.iter().sum();
        if sg <= 1e-12 {
            continue;
        }
        let (mut cg, mut cp, mut emd) = (0.0, 0.0, 0.0);
        for b in 0..pg.len() {
            cg += pg[b] / sg;
            cp += if sp > 1e-12 { pp[b] / sp } else { 0.0 };
            emd += (cg - cp).abs();
        }
        weighted += sg * emd;
        total += sg;
    }
    weighted / total
}

#[test]
fn npss_matches_brute_force_dft_oracle() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let (frames, dims) = (16, 5);
    let gt: Vec<f64> = (0..frames * dims).map(|_| rng.gen_range(-1.0..1.0)).collect();
    let pred: Vec<f64> = (0..frames * dims).map(|_| rng.gen_range(-1.0..1.0)).collect();
    let got = npss(&gt, &pred, frames, dims).unwrap();
    let want = npss_oracle(&gt, &pred, frames, dims);
    assert!((got - want).abs() < 1e-9, "npss {got} vs oracle {want}");
}

#[test]
fn npss_is_zero_for_identical_sequences() {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let x: Vec<f64> = (0..12 * 3).map(|_| rng.gen_range(-1.0..1.0)).collect();
    assert!(npss(&x, &x, 12, 3).unwrap() < 1e-12);
}

#[test]
fn frechet_distance_unit_mean_shift_is_one() {
    // N(0,1) vs N(1,1) in one dimension.
    let a = GaussianStats { dim: 1, mean: vec![0.0], cov: vec![1.0] };
    let b = GaussianStats { dim: 1, mean: vec![1.0], cov: vec![1.0] };
    let fd = frechet_distance(&a, &b).unwrap();
    assert!((fd - 1.0).abs() < 1e-9, "fd = {fd}");
}

#[test]
fn frechet_distance_matches_diagonal_closed_form() {
    // Diagonal covariances: FD = |mu1-mu2|^2 + sum (sqrt(s1) - sqrt(s2))^2.
    let a = GaussianStats {
        dim: 3,
        mean: vec![0.0, 1.0, -2.0],
        cov: vec![2.0, 0.0, 0.0, 0.0, 0.5, 0.0, 0.0, 0.0, 1.0],
    };
    let b = GaussianStats {
        dim: 3,
        mean: vec![1.0, 1.0, 0.0],
        cov: vec![1.0, 0.0, 0.0, 0.0, 3.0, 0.0, 0.0, 0.0, 1.0],
    };
    let want = (1.0f64 + 0.0 + 4.0)
        + (2.0f64.sqrt() - 1.0).powi(2)
        + (0.5f64.sqrt() - 3.0f64.sqrt()).powi(2);
    let fd = frechet_distance(&a, &b).unwrap();
    assert!((fd - want).abs() < 1e-9, "fd {fd} vs {want}");
}

#[test]
fn frechet_distance_is_zero_on_itself_and_rejects_dim_mismatch() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let rows: Vec<f64> = (0..50 * 4).map(|_| rng.gen_range(-1.0..1.0)).collect();
    let s = GaussianStats::from_rows(&rows, 50, 4).unwrap();
    assert!(frechet_distance(&s, &s).unwrap() < 1e-9);
    let other = GaussianStats { dim: 2, mean: vec![0.0; 2], cov: vec![1.0, 0.0, 0.0, 1.0] };
    assert!(frechet_distance(&s, &other).is_err());
}

#[test]
fn gaussian_stats_match_naive_moments() {
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    let (n, d) = (30, 3);
    let rows: Vec<f64> = (0..n * d).map(|_| rng.gen_range(-1.0..1.0)).collect();
    let s = GaussianStats::from_rows(&rows, n, d).unwrap();
    for i in 0..d {
        let mean: f64 = (0..n).map(|r| rows[r * d + i]).sum::<f64>() / n as f64;
        assert!((s.mean[i] - mean).abs() < 1e-12);
        for j in 0..d {
            let mj: f64 = (0..n).map(|r| rows[r * d + j]).sum::<f64>() / n as f64;
            let c: f64 = (0..n)
                .map(|r| (rows[r * d + i] - mean) * (rows[r * d + j] - mj))
                .sum::<f64>()
                / (n - 1) as f64;
            assert!((s.cov[i * d + j] - c).abs() < 1e-12);
        }
    }
}

#[test]
fn beat_consistency_closed_forms() {
    let music: Vec<f64> = (0..10).map(|i| i as f64 * 0.5).collect();
    // Perfect alignment.
    assert!((beat_consistency(&music, &music, BC_SIGMA_SEC).unwrap() - 1.0).abs() < 1e-12);
    // A uniform three-frame offset at 60 FPS scores exactly exp(-1/2).
    let offset: Vec<f64> = music.iter().map(|t| t + 3.0 / 60.0).collect();
    let bc = beat_consistency(&music, &offset, BC_SIGMA_SEC).unwrap();
    assert!((bc - (-0.5f64).exp()).abs() < 1e-12, "bc = {bc}");
}

#[test]
fn beat_consistency_matches_double_loop_oracle_and_shift_invariance() {
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let music: Vec<f64> = (0..12).map(|i| i as f64 * 0.45 + rng.gen_range(-0.05..0.05)).collect();
    let motion: Vec<f64> = (0..15).map(|i| i as f64 * 0.37 + rng.gen_range(-0.05..0.05)).collect();
    let got = beat_consistency(&music, &motion, BC_SIGMA_SEC).unwrap();
    let mut want = 0.0;
    for &tb in &music {
        let mut best = f64::INFINITY;
        for &tk in &motion {
            best = best.min((tk - tb).abs());
        }
        want += (-best * best / (2.0 * BC_SIGMA_SEC * BC_SIGMA_SEC)).exp();
    }
    want /= music.len() as f64;
    assert!((got - want).abs() < 1e-12, "bc {got} vs oracle {want}");

    // Shifting both beat sets by a common offset leaves the score unchanged.
    let music_s: Vec<f64> = music.iter().map(|t| t + 7.25).collect();
    let motion_s: Vec<f64> = motion.iter().map(|t| t + 7.25).collect();
    let shifted = beat_consistency(&music_s, &motion_s, BC_SIGMA_SEC).unwrap();
    assert!((got - shifted).abs() < 1e-12);
}

fn bouncing_sequence(topology: &SkeletonTopology, fps: f64, seconds: f64, hz: f64) -> PoseSequence {
    let joints = topology.joint_count();
    let n = (seconds * fps) as usize;
    let frames = (0..n)
        .map(|i| {
            let t = i as f64 / fps;
            let mut pose = Pose::identity(joints);
            pose.root_position = [0.0, (2.0 * std::f64::consts::PI * hz * t).sin(), 0.0];
            pose
        })
        .collect();
    PoseSequence::new(fps, 0.0, frames).unwrap()
}

#[test]
fn kinematic_beats_land_on_motion_extremes() {
    let topology = SkeletonTopology::default_canonical();
    let seq = bouncing_sequence(&topology, 60.0, 4.0, 1.0);
    let beats = kinematic_beats(&topology, &seq).unwrap();
    assert!(beats.len() >= 6, "got {} beats", beats.len());
    // Speed minima of sin(2 pi t) sit at t = 0.25, 0.75, 1.25, ...
    for &b in &beats {
        let phase = (b * 2.0).fract(); // in units of half periods
        let dist = (phase - 0.5).abs().min(phase.min(1.0 - phase) + 0.5);
        let nearest = ((b * 2.0) - 0.5).round() / 2.0 + 0.25;
        let err = (b - nearest).abs();
        assert!(err < 3.0 / 60.0, "beat at {b} is {err}s from an extreme (phase {dist})");
    }
}

#[test]
fn pose_variance_matches_closed_forms_across_sequences() {
    let topology = SkeletonTopology::default_canonical();
    let base = bouncing_sequence(&topology, 60.0, 1.0, 1.0);

    // Identical sequences carry no cross-set variance.
    let pv0 = pose_variance(&topology, &[base.clone(), base.clone()]).unwrap();
    assert!(pv0 < 1e-24, "pv {pv0}");

    // Shifting the root x by +1 and -1 yields per-cell variance 1 in every
    // x cell — exactly one third of all cells.
    let shift = |delta: f64| {
        let mut s = base.clone();
        for f in &mut s.frames {
            f.root_position[0] += delta;
        }
        s
    };
    let pv = pose_variance(&topology, &[shift(1.0), shift(-1.0)]).unwrap();
    assert!((pv - 1.0 / 3.0).abs() < 1e-12, "pv {pv}");

    // Doubling the spread quadruples the variance.
    let pv2 = pose_variance(&topology, &[shift(2.0), shift(-2.0)]).unwrap();
    assert!((pv2 - 4.0 * pv).abs() < 1e-12, "pv2 {pv2}");
}

#[test]
fn pose_variance_against_loop_oracle_and_length_check() {
    let topology = SkeletonTopology::default_canonical();
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let joints = topology.joint_count();
    let make = |rng: &mut ChaCha8Rng, n: usize| {
        let frames: Vec<Pose> = (0..n)
            .map(|_| {
                let mut p = Pose::identity(joints);
                p.root_position = [
                    rng.gen_range(-1.0..1.0),
                    rng.gen_range(-1.0..1.0),
                    rng.gen_range(-1.0..1.0),
                ];
                p
            })
            .collect();
        PoseSequence::new(30.0, 0.0, frames).unwrap()
    };
    let seqs: Vec<PoseSequence> = (0..4).map(|_| make(&mut rng, 8)).collect();
    let got = pose_variance(&topology, &seqs).unwrap();

    // Loop oracle: population variance per cell over the sequence set, then
    // the plain mean over cells.
    use dancegen_core::metrics::position_features;
    let feats: Vec<Vec<f64>> = seqs
        .iter()
        .map(|s| position_features(&topology, s).unwrap())
        .collect();
    let cells = feats[0].len();
    let mut want = 0.0;
    for c in 0..cells {
        let mean: f64 = feats.iter().map(|f| f[c]).sum::<f64>() / feats.len() as f64;
        want += feats.iter().map(|f| (f[c] - mean).powi(2)).sum::<f64>() / feats.len() as f64;
    }
    want /= cells as f64;
    assert!((got - want).abs() < 1e-12, "pv {got} vs oracle {want}");

    // Unequal frame counts are a caller error, not a silent truncation.
    let mut uneven = seqs.clone();
    uneven.push(make(&mut rng, 9));
    assert!(pose_variance(&topology, &uneven).is_err());
}

#[test]
fn pfd_vfd_zero_on_identical_sets_and_positive_on_shifted() {
    let topology = SkeletonTopology::default_canonical();
    let seq = bouncing_sequence(&topology, 30.0, 2.0, 1.0);
    let (pfd, vfd) = pfd_vfd(&topology, &[seq], &[bouncing_sequence(&topology, 30.0, 2.0, 1.0)])
        .unwrap();
    assert!(pfd < 1e-6, "pfd {pfd}");
    assert!(vfd < 1e-6, "vfd {vfd}");

    // Shift the generated set by a meter; the position distance must react,
    // velocities stay identical.
    let mut shifted = bouncing_sequence(&topology, 30.0, 2.0, 1.0);
    for f in &mut shifted.frames {
        f.root_position[0] += 1.0;
    }
    let (pfd2, vfd2) = pfd_vfd(
        &topology,
        &[bouncing_sequence(&topology, 30.0, 2.0, 1.0)],
        &[shifted],
    )
    .unwrap();
    assert!(pfd2 > 0.1, "pfd {pfd2}");
    assert!(vfd2 < 1e-6, "vfd {vfd2}");
}

#[test]
fn static_sequence_rejects_beats_but_scores_zero_variance() {
    let topology = SkeletonTopology::default_canonical();
    let joints = topology.joint_count();
    let frames: Vec<Pose> = (0..30).map(|_| Pose::identity(joints)).collect();
    let seq = PoseSequence::new(30.0, 0.0, frames).unwrap();
    let pv = pose_variance(&topology, &[seq.clone(), seq]).unwrap();
    assert!(pv < 1e-24, "pv {pv}");
}

#[test]
fn npss_rejects_bad_shapes() {
    assert!(npss(&[0.0; 8], &[0.0; 9], 4, 2).is_err());
    assert!(npss(&[0.0; 4], &[0.0; 4], 2, 2).is_err());
}

#[test]
fn quaternion_motion_contributes_to_velocity_distance() {
    // Rotating an arm joint moves downstream joints, so VFD must see purely
    // rotational motion as well.
    let topology = SkeletonTopology::default_canonical();
    let joints = topology.joint_count();
    let make = |amp: f64| {
        let frames: Vec<Pose> = (0..60)
            .map(|i| {
                let t = i as f64 / 30.0;
                let mut pose = Pose::identity(joints);
                pose.joint_rotations[3] = Quaternion::from_axis_angle(
                    [1.0, 0.0, 0.0],
                    amp * (2.0 * std::f64::consts::PI * t).sin(),
                ).unwrap();
                pose
            })
            .collect();
        PoseSequence::new(30.0, 0.0, frames).unwrap()
    };
    let (pfd, vfd) = pfd_vfd(&topology, &[make(0.8)], &[make(0.1)]).unwrap();
    assert!(pfd > 1e-4);
    assert!(vfd > 1e-4);
}
