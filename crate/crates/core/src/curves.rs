//! Kochanek-Bartels (TCB) motion curves: tangent math, segment evaluation,
//! FPS-agnostic sampling, and least-squares fitting of 7-parameter segments
//! from dense pose sequences.
//!
//! Each inter-beat interval of each scalar channel is one 4-knot segment.
//! The boundary knots are pinned to the key-pose channel values; the free
//! parameters are tension/continuity/bias plus the (time, value) of the two
//! inner knots, 7 scalars total.

use crate::error::{CoreError, Result};
use crate::kinematics::{Pose, PoseSequence, Quaternion, SkeletonTopology};

/// One spline control point.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Knot {
    pub time: f64,
    pub value: f64,
}

impl Knot {
    pub fn new(time: f64, value: f64) -> Knot {
        Knot { time, value }
    }
}

/// A 4-knot TCB segment between two pinned boundary knots.
#[derive(Debug, Clone, PartialEq)]
pub struct TcbSegment {
    pub start_knot: Knot,
    pub inner1: Knot,
    pub inner2: Knot,
    pub end_knot: Knot,
    pub tension: f64,
    pub continuity: f64,
    pub bias: f64,
}

impl TcbSegment {
    pub fn new(
        start_knot: Knot,
        inner1: Knot,
        inner2: Knot,
        end_knot: Knot,
        tension: f64,
        continuity: f64,
        bias: f64,
    ) -> Result<TcbSegment> {
        let seg = TcbSegment { start_knot, inner1, inner2, end_knot, tension, continuity, bias };
        seg.validate()?;
        Ok(seg)
    }

    pub fn validate(&self) -> Result<()> {
        let ts = [self.start_knot.time, self.inner1.time, self.inner2.time, self.end_knot.time];
        if ts.windows(2).any(|w| w[0] >= w[1]) {
            return Err(CoreError::InvalidArgument(format!(
                "segment knot times not strictly increasing: {ts:?}"
            )));
        }
        for p in [self.tension, self.continuity, self.bias] {
            if !(-1.0..=1.0).contains(&p) || !p.is_finite() {
                return Err(CoreError::InvalidArgument(format!("tcb parameter {p} outside [-1, 1]")));
            }
        }
        Ok(())
    }

    fn knots(&self) -> [Knot; 4] {
        [self.start_knot, self.inner1, self.inner2, self.end_knot]
    }

    pub fn start_time(&self) -> f64 {
        self.start_knot.time
    }

    pub fn end_time(&self) -> f64 {
        self.end_knot.time
    }

    /// Evaluates the segment at `time` (cubic Hermite over the containing
    /// knot gap, tangents scaled by the gap duration).
    pub fn eval(&self, time: f64) -> Result<f64> {
        if time < self.start_time() - 1e-12 || time > self.end_time() + 1e-12 {
            return Err(CoreError::OutOfRange(format!(
                "time {time} outside segment [{}, {}]",
                self.start_time(),
                self.end_time()
            )));
        }
        let knots = self.knots();
        let mut gap = 2;
        for g in 0..3 {
            if time <= knots[g + 1].time {
                gap = g;
                break;
            }
        }
        let k0 = knots[gap];
        let k1 = knots[gap + 1];
        let h = k1.time - k0.time;
        let s = ((time - k0.time) / h).clamp(0.0, 1.0);
        let (_, out0) = self.tangents_at(gap);
        let (in1, _) = self.tangents_at(gap + 1);
        let s2 = s * s;
        let s3 = s2 * s;
        let h00 = 2.0 * s3 - 3.0 * s2 + 1.0;
        let h10 = s3 - 2.0 * s2 + s;
        let h01 = -2.0 * s3 + 3.0 * s2;
        let h11 = s3 - s2;
        Ok(h00 * k0.value + h10 * h * out0 + h01 * k1.value + h11 * h * in1)
    }

    /// (incoming, outgoing) tangent slopes at knot index 0..4 within the
    /// segment; boundary knots use the one-sided difference.
    fn tangents_at(&self, idx: usize) -> (f64, f64) {
        let knots = self.knots();
        let prev = if idx > 0 { Some(knots[idx - 1]) } else { None };
        let next = if idx < 3 { Some(knots[idx + 1]) } else { None };
        tcb_tangents(prev, knots[idx], next, self.tension, self.continuity, self.bias)
            .expect("validated segment has distinct knot times")
    }
}

/// TCB tangents at a knot, in slope units (value difference over time span).
///
/// A missing neighbor is replaced by the one-sided difference toward the
/// available neighbor, which keeps segments self-contained.
pub fn tcb_tangents(
    prev: Option<Knot>,
    at: Knot,
    next: Option<Knot>,
    tension: f64,
    continuity: f64,
    bias: f64,
) -> Result<(f64, f64)> {
    if prev.is_none() && next.is_none() {
        return Err(CoreError::InvalidArgument("tangent needs at least one neighbor".into()));
    }
    let slope = |a: Knot, b: Knot| -> Result<f64> {
        let dt = b.time - a.time;
        if dt.abs() < 1e-12 {
            return Err(CoreError::Degenerate(format!("duplicate knot time {}", a.time)));
        }
        Ok((b.value - a.value) / dt)
    };
    let slope_in = match prev {
        Some(p) => slope(p, at)?,
        None => slope(at, next.unwrap())?,
    };
    let slope_out = match next {
        Some(n) => slope(at, n)?,
        None => slope_in,
    };
    let (t, c, b) = (tension, continuity, bias);
    let outgoing = 0.5 * (1.0 - t) * (1.0 + b) * (1.0 + c) * slope_in
        + 0.5 * (1.0 - t) * (1.0 - b) * (1.0 - c) * slope_out;
    let incoming = 0.5 * (1.0 - t) * (1.0 + b) * (1.0 - c) * slope_in
        + 0.5 * (1.0 - t) * (1.0 - b) * (1.0 + c) * slope_out;
    Ok((incoming, outgoing))
}

/// Raw (unconstrained) 7-parameter encoding of a segment's free parameters,
/// as produced by the curve-prediction network head.
///
/// Layout: `[t_raw, c_raw, b_raw, u1_raw, u2_raw, v1, v2]`. Tension,
/// continuity, and bias are squashed through tanh; the two inner knot times
/// come from a stick-breaking map that guarantees strict ordering inside the
/// segment span.
pub fn decode_segment_params(
    raw: &[f64; 7],
    start_knot: Knot,
    end_knot: Knot,
) -> Result<TcbSegment> {
    let span = end_knot.time - start_knot.time;
    if span <= 0.0 {
        return Err(CoreError::InvalidArgument("segment span must be positive".into()));
    }
    let a = softplus(raw[3]);
    let b2 = softplus(raw[4]);
    let denom = a + b2 + 1.0;
    // Keep inner times strictly inside the span even for extreme raw values.
    let u1 = (a / denom).clamp(1e-4, 1.0 - 3e-4);
    let u2 = ((a + b2) / denom).clamp(u1 + 1e-4, 1.0 - 2e-4);
    TcbSegment::new(
        start_knot,
        Knot::new(start_knot.time + u1 * span, raw[5]),
        Knot::new(start_knot.time + u2 * span, raw[6]),
        end_knot,
        raw[0].tanh(),
        raw[1].tanh(),
        raw[2].tanh(),
    )
}

/// Inverse of [`decode_segment_params`] for teacher-forcing targets.
pub fn encode_segment_params(seg: &TcbSegment) -> [f64; 7] {
    let span = seg.end_knot.time - seg.start_knot.time;
    let u1 = ((seg.inner1.time - seg.start_knot.time) / span).clamp(1e-4, 1.0 - 3e-4);
    let u2 = ((seg.inner2.time - seg.start_knot.time) / span).clamp(u1 + 1e-4, 1.0 - 2e-4);
    let a = u1 / (1.0 - u2);
    let b2 = (u2 - u1) / (1.0 - u2);
    // Inner knots near the segment end make the stick-breaking ratios blow
    // up; saturate the raw encoding so regression targets stay bounded. The
    // decoded knot times move by well under the sampling resolution.
    [
        atanh_clamped(seg.tension),
        atanh_clamped(seg.continuity),
        atanh_clamped(seg.bias),
        inv_softplus(a).clamp(-8.0, 8.0),
        inv_softplus(b2).clamp(-8.0, 8.0),
        seg.inner1.value,
        seg.inner2.value,
    ]
}

fn softplus(x: f64) -> f64 {
    if x > 30.0 {
        x
    } else {
        (1.0 + x.exp()).ln()
    }
}

fn inv_softplus(y: f64) -> f64 {
    if y > 30.0 {
        y
    } else {
        (y.exp() - 1.0).max(1e-12).ln()
    }
}

fn atanh_clamped(x: f64) -> f64 {
    let x = x.clamp(-1.0 + 1e-9, 1.0 - 1e-9);
    0.5 * ((1.0 + x) / (1.0 - x)).ln()
}

/// One scalar channel over the whole dance: chained segments whose boundary
/// knots coincide.
#[derive(Debug, Clone, PartialEq)]
pub struct MotionCurve {
    pub channel_id: usize,
    pub segments: Vec<TcbSegment>,
}

impl MotionCurve {
    pub fn new(channel_id: usize, segments: Vec<TcbSegment>) -> Result<MotionCurve> {
        if segments.is_empty() {
            return Err(CoreError::EmptyInput("motion curve needs at least one segment".into()));
        }
        for w in segments.windows(2) {
            if (w[0].end_knot.time - w[1].start_knot.time).abs() > 1e-12
                || (w[0].end_knot.value - w[1].start_knot.value).abs() > 1e-12
            {
                return Err(CoreError::InvalidArgument(
                    "adjacent segments do not chain at the boundary knot".into(),
                ));
            }
        }
        Ok(MotionCurve { channel_id, segments })
    }

    pub fn domain(&self) -> (f64, f64) {
        (self.segments[0].start_time(), self.segments.last().unwrap().end_time())
    }

    /// Evaluates at `time`, which must lie inside the curve domain.
    pub fn eval(&self, time: f64) -> Result<f64> {
        let (lo, hi) = self.domain();
        if time < lo - 1e-12 || time > hi + 1e-12 {
            return Err(CoreError::OutOfRange(format!("time {time} outside curve [{lo}, {hi}]")));
        }
        let idx = self
            .segments
            .partition_point(|s| s.end_time() < time)
            .min(self.segments.len() - 1);
        self.segments[idx].eval(time.clamp(lo, hi))
    }
}

/// The full set of canonical channels for one dance, sharing the beat grid
/// as segment boundaries.
#[derive(Debug, Clone, PartialEq)]
pub struct CurveSet {
    pub curves: Vec<MotionCurve>,
    pub beat_times: Vec<f64>,
}

impl CurveSet {
    pub fn new(curves: Vec<MotionCurve>, beat_times: Vec<f64>) -> Result<CurveSet> {
        if beat_times.len() < 2 {
            return Err(CoreError::EmptyInput("curve set needs at least two beats".into()));
        }
        if beat_times.windows(2).any(|w| w[0] >= w[1]) {
            return Err(CoreError::InvalidArgument("beat times not strictly increasing".into()));
        }
        for curve in &curves {
            if curve.segments.len() != beat_times.len() - 1 {
                return Err(CoreError::Schema(format!(
                    "channel {} has {} segments for {} beats",
                    curve.channel_id,
                    curve.segments.len(),
                    beat_times.len()
                )));
            }
            for (seg, w) in curve.segments.iter().zip(beat_times.windows(2)) {
                if (seg.start_time() - w[0]).abs() > 1e-9 || (seg.end_time() - w[1]).abs() > 1e-9 {
                    return Err(CoreError::Schema(format!(
                        "channel {} segment boundaries do not sit on the beat grid",
                        curve.channel_id
                    )));
                }
            }
        }
        Ok(CurveSet { curves, beat_times })
    }

    pub fn channel_count(&self) -> usize {
        self.curves.len()
    }
}

/// Result of sampling a curve set at a fixed FPS.
pub struct SampledSequence {
    pub sequence: PoseSequence,
    /// Frames whose timestamp had to be clipped into the curve domain.
    pub clipped_frames: usize,
}

/// Densely samples all channels and assembles per-frame poses; joint
/// quaternion channels are renormalized per frame.
pub fn sample_curveset(curves: &CurveSet, fps: f64) -> Result<SampledSequence> {
    if fps <= 0.0 {
        return Err(CoreError::InvalidArgument("fps must be positive".into()));
    }
    let start = curves.beat_times[0];
    let end = *curves.beat_times.last().unwrap();
    let frame_count = ((end - start) * fps).floor() as usize + 1;
    let mut frames = Vec::with_capacity(frame_count);
    let mut clipped = 0;
    for f in 0..frame_count {
        let t = start + f as f64 / fps;
        let tc = t.clamp(start, end);
        if tc != t {
            clipped += 1;
        }
        let mut channels = Vec::with_capacity(curves.channel_count());
        for curve in &curves.curves {
            channels.push(curve.eval(tc)?);
        }
        frames.push(Pose::from_channels(&channels)?);
    }
    Ok(SampledSequence {
        sequence: PoseSequence::new(fps, start, frames)?,
        clipped_frames: clipped,
    })
}

/// Outcome of fitting one segment.
#[derive(Debug, Clone)]
pub struct SegmentFit {
    pub segment: TcbSegment,
    pub rmse: f64,
    pub converged: bool,
}

/// Fits the 7 free parameters of one segment to `(time, value)` samples by
/// Nelder-Mead on the unconstrained encoding, with boundary knots fixed.
pub fn fit_segment(samples: &[(f64, f64)], start_knot: Knot, end_knot: Knot) -> Result<SegmentFit> {
    let interior: Vec<(f64, f64)> = samples
        .iter()
        .copied()
        .filter(|(t, _)| *t > start_knot.time && *t < end_knot.time)
        .collect();
    if interior.len() < 8 {
        return Err(CoreError::InvalidArgument(format!(
            "fit needs at least 8 interior samples, got {}",
            interior.len()
        )));
    }
    let mut all: Vec<(f64, f64)> = interior;
    all.push((start_knot.time, start_knot.value));
    all.push((end_knot.time, end_knot.value));
    all.sort_by(|a, b| a.0.partial_cmp(&b.0).unwrap());

    let span = end_knot.time - start_knot.time;
    let lerp_at = |u: f64| -> f64 {
        let t = start_knot.time + u * span;
        // Piecewise-linear interpolation of the samples at the inner times.
        match all.windows(2).find(|w| t >= w[0].0 && t <= w[1].0) {
            Some(w) => {
                let s = (t - w[0].0) / (w[1].0 - w[0].0).max(1e-12);
                w[0].1 + s * (w[1].1 - w[0].1)
            }
            None => 0.5 * (start_knot.value + end_knot.value),
        }
    };

    let objective = |p: &[f64]| -> f64 {
        let raw = [p[0], p[1], p[2], p[3], p[4], p[5], p[6]];
        match decode_segment_params(&raw, start_knot, end_knot) {
            Ok(seg) => {
                let mut sum = 0.0;
                for (t, v) in &all {
                    let e = seg.eval(*t).unwrap_or(f64::INFINITY) - v;
                    sum += e * e;
                }
                sum / all.len() as f64
            }
            Err(_) => f64::INFINITY,
        }
    };

    // Start at t=c=b=0 with inner knots on the piecewise-linear interpolant
    // of the samples; several inner-time placements guard against the
    // optimizer settling in the wrong basin when the true knots sit far from
    // the thirds.
    let raw_times = |u1: f64, u2: f64| -> (f64, f64) {
        (inv_softplus(u1 / (1.0 - u2)), inv_softplus((u2 - u1) / (1.0 - u2)))
    };
    let starts: [(f64, f64); 4] = [(1.0 / 3.0, 2.0 / 3.0), (0.2, 0.45), (0.55, 0.8), (0.15, 0.85)];
    let value_scale = all
        .iter()
        .map(|(_, v)| (v - start_knot.value).abs())
        .fold(0.1_f64, f64::max);
    let steps = vec![0.25, 0.25, 0.25, 0.4, 0.4, 0.25 * value_scale, 0.25 * value_scale];
    let mut best_fx = f64::INFINITY;
    let mut best_x: Vec<f64> = Vec::new();
    let mut converged = false;
    'starts: for &(u1, u2) in &starts {
        let (r1, r2) = raw_times(u1, u2);
        // Restart from the incumbent with a shrunken simplex to polish the
        // solution past the coarse basin found in the first round.
        let mut x = vec![0.0, 0.0, 0.0, r1, r2, lerp_at(u1), lerp_at(u2)];
        let mut fx = f64::INFINITY;
        for round in 0..4 {
            let scale = 0.25_f64.powi(round);
            let scaled: Vec<f64> = steps.iter().map(|s| s * scale).collect();
            let nm = nelder_mead(&objective, &x, &scaled, 500, 1e-14);
            if nm.fx <= fx {
                fx = nm.fx;
                x = nm.x;
                if nm.fx <= best_fx {
                    best_fx = nm.fx;
                    best_x = x.clone();
                    converged = nm.converged;
                }
            }
            if best_fx < 1e-16 {
                break 'starts;
            }
        }
        // Good enough for any consumer; skip the remaining starts.
        if best_fx < 1e-12 {
            break;
        }
    }
    let x = best_x;
    let raw = [x[0], x[1], x[2], x[3], x[4], x[5], x[6]];
    Ok(SegmentFit {
        segment: decode_segment_params(&raw, start_knot, end_knot)?,
        rmse: best_fx.sqrt(),
        converged,
    })
}

struct NmResult {
    x: Vec<f64>,
    fx: f64,
    converged: bool,
}

/// Derivative-free Nelder-Mead minimization; only accepts improvements, so
/// the returned objective never exceeds the initial one.
fn nelder_mead(
    f: &dyn Fn(&[f64]) -> f64,
    x0: &[f64],
    steps: &[f64],
    max_iter: usize,
    tol: f64,
) -> NmResult {
    let n = x0.len();
    let mut simplex: Vec<(Vec<f64>, f64)> = Vec::with_capacity(n + 1);
    simplex.push((x0.to_vec(), f(x0)));
    for i in 0..n {
        let mut x = x0.to_vec();
        x[i] += steps[i];
        let fx = f(&x);
        simplex.push((x, fx));
    }
    let mut converged = false;
    for _ in 0..max_iter {
        simplex.sort_by(|a, b| a.1.partial_cmp(&b.1).unwrap());
        if (simplex[n].1 - simplex[0].1).abs() < tol {
            converged = true;
            break;
        }
        let mut centroid = vec![0.0; n];
        for (x, _) in simplex.iter().take(n) {
            for (c, xi) in centroid.iter_mut().zip(x.iter()) {
                *c += xi / n as f64;
            }
        }
        let worst = simplex[n].clone();
        let at = |coef: f64| -> Vec<f64> {
            centroid
                .iter()
                .zip(worst.0.iter())
                .map(|(c, w)| c + coef * (c - w))
                .collect()
        };
        let reflected = at(1.0);
        let fr = f(&reflected);
        if fr < simplex[0].1 {
            let expanded = at(2.0);
            let fe = f(&expanded);
            simplex[n] = if fe < fr { (expanded, fe) } else { (reflected, fr) };
        } else if fr < simplex[n - 1].1 {
            simplex[n] = (reflected, fr);
        } else {
            let contracted = if fr < worst.1 { at(0.5) } else { at(-0.5) };
            let fc = f(&contracted);
            if fc < worst.1.min(fr) {
                simplex[n] = (contracted, fc);
            } else {
                // Shrink toward the best vertex.
                let best = simplex[0].0.clone();
                for v in simplex.iter_mut().skip(1) {
                    for (xi, bi) in v.0.iter_mut().zip(best.iter()) {
                        *xi = bi + 0.5 * (*xi - bi);
                    }
                    v.1 = f(&v.0);
                }
            }
        }
    }
    simplex.sort_by(|a, b| a.1.partial_cmp(&b.1).unwrap());
    NmResult { x: simplex[0].0.clone(), fx: simplex[0].1, converged }
}

/// Residual summary for one fitted channel.
#[derive(Debug, Clone)]
pub struct ChannelResidual {
    pub channel_id: usize,
    pub mean_rmse: f64,
    pub max_rmse: f64,
}

/// Result of fitting a full curve set from a dense pose sequence.
pub struct CurveFit {
    pub curves: CurveSet,
    pub key_poses: Vec<crate::kinematics::KeyPose>,
    pub residuals: Vec<ChannelResidual>,
}

/// Fits all canonical channels of a pose sequence against a beat grid.
///
/// Key poses are the nearest-frame poses at the beat times; they pin the
/// boundary knots of every segment. Quaternion channels are fit
/// component-wise after hemisphere alignment.
pub fn fit_curveset(
    topology: &SkeletonTopology,
    seq: &PoseSequence,
    beat_times: &[f64],
) -> Result<CurveFit> {
    if beat_times.len() < 2 {
        return Err(CoreError::EmptyInput("need at least two beats".into()));
    }
    let seq_start = seq.start_time;
    let seq_end = seq.frame_time(seq.frames.len() - 1);
    for &b in beat_times {
        if b < seq_start - 1e-9 || b > seq_end + 1e-9 {
            return Err(CoreError::OutOfRange(format!(
                "beat {b} outside sequence span [{seq_start}, {seq_end}]"
            )));
        }
    }

    // Hemisphere-align quaternions along time so components are continuous.
    let mut frames = seq.frames.clone();
    let joint_count = frames[0].joint_rotations.len();
    for j in 0..joint_count {
        for f in 1..frames.len() {
            let prev = frames[f - 1].joint_rotations[j];
            let cur = frames[f].joint_rotations[j];
            if prev.dot(&cur) < 0.0 {
                frames[f].joint_rotations[j] =
                    Quaternion { w: -cur.w, x: -cur.x, y: -cur.y, z: -cur.z };
            }
        }
    }

    let channel_count = 3 + 4 * joint_count;
    let channel_rows: Vec<Vec<f64>> = frames.iter().map(|p| p.to_channels()).collect();

    let beat_frames: Vec<usize> = beat_times.iter().map(|&t| seq.nearest_frame(t)).collect();
    let key_poses = beat_frames
        .iter()
        .map(|&fi| crate::kinematics::pose_to_keypose(topology, &frames[fi]))
        .collect::<Result<Vec<_>>>()?;

    // Boundary knots are pinned to the key poses, reconciled through the
    // same keypose -> pose -> channels path (and beat-wise hemisphere
    // alignment) that generation uses, so the pinning invariant holds to
    // the last bit for fitted files too.
    let mut boundary: Vec<Vec<f64>> = Vec::with_capacity(key_poses.len());
    for kp in &key_poses {
        let mut ch = crate::kinematics::keypose_to_pose(topology, kp)?.to_channels();
        if let Some(prev) = boundary.last() {
            crate::kinematics::align_channels(prev, &mut ch);
        }
        boundary.push(ch);
    }

    let mut curves = Vec::with_capacity(channel_count);
    let mut residuals = Vec::with_capacity(channel_count);
    for ch in 0..channel_count {
        let mut segments = Vec::with_capacity(beat_times.len() - 1);
        let mut rmses = Vec::new();
        for k in 0..beat_times.len() - 1 {
            let (t0, t1) = (beat_times[k], beat_times[k + 1]);
            let start_knot = Knot::new(t0, boundary[k][ch]);
            let end_knot = Knot::new(t1, boundary[k + 1][ch]);
            let samples: Vec<(f64, f64)> = (0..frames.len())
                .map(|fi| (seq.frame_time(fi), channel_rows[fi][ch]))
                .filter(|(t, _)| *t > t0 && *t < t1)
                .collect();
            let fit = if samples.len() >= 8 {
                fit_segment(&samples, start_knot, end_knot)?
            } else {
                // Too few interior frames to optimize; fall back to a neutral
                // segment with inner knots on the chord.
                let seg = decode_segment_params(
                    &[
                        0.0,
                        0.0,
                        0.0,
                        inv_softplus(1.0),
                        inv_softplus(1.0),
                        start_knot.value + (end_knot.value - start_knot.value) / 3.0,
                        start_knot.value + 2.0 * (end_knot.value - start_knot.value) / 3.0,
                    ],
                    start_knot,
                    end_knot,
                )?;
                let rmse = if samples.is_empty() {
                    0.0
                } else {
                    (samples
                        .iter()
                        .map(|(t, v)| {
                            let e = seg.eval(*t).unwrap() - v;
                            e * e
                        })
                        .sum::<f64>()
                        / samples.len() as f64)
                        .sqrt()
                };
                SegmentFit { segment: seg, rmse, converged: true }
            };
            rmses.push(fit.rmse);
            segments.push(fit.segment);
        }
        let mean = rmses.iter().sum::<f64>() / rmses.len() as f64;
        let max = rmses.iter().fold(0.0_f64, |a, &b| a.max(b));
        residuals.push(ChannelResidual { channel_id: ch, mean_rmse: mean, max_rmse: max });
        curves.push(MotionCurve::new(ch, segments)?);
    }

    Ok(CurveFit {
        curves: CurveSet::new(curves, beat_times.to_vec())?,
        key_poses,
        residuals,
    })
}
