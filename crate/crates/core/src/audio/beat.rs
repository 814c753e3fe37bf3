//! Onset detection, tempo estimation and dynamic-programming beat tracking.

use crate::error::{CoreError, Result};

use super::spectral::{frame_time, log_mel, Spectrogram, HOP, MEL_BANDS, SAMPLE_RATE};

/// Spectral-flux onset strength on the 10 ms frame grid.
#[derive(Debug, Clone)]
pub struct OnsetEnvelope {
    pub values: Vec<f64>,
}

impl OnsetEnvelope {
    pub fn frame_time(&self, frame: usize) -> f64 {
        frame_time(frame)
    }

    pub fn hop_seconds(&self) -> f64 {
        HOP as f64 / SAMPLE_RATE as f64
    }
}

/// Tempo and beat tracking knobs. All fields have sensible defaults; the
/// prior center is the classic 120 BPM log-Gaussian.
#[derive(Debug, Clone, Copy)]
pub struct BeatParams {
    pub min_bpm: f64,
    pub max_bpm: f64,
    /// Center of the log-Gaussian tempo prior, BPM.
    pub prior_bpm: f64,
    /// Width of the tempo prior in octaves.
    pub prior_octaves: f64,
    /// Regularity weight of the dynamic program.
    pub alpha: f64,
}

impl Default for BeatParams {
    fn default() -> BeatParams {
        BeatParams {
            min_bpm: 70.0,
            max_bpm: 250.0,
            prior_bpm: 120.0,
            prior_octaves: 1.0,
            alpha: 100.0,
        }
    }
}

/// A tracked beat grid.
#[derive(Debug, Clone)]
pub struct BeatGrid {
    pub bpm: f64,
    pub beat_times: Vec<f64>,
}

impl BeatGrid {
    pub fn period(&self) -> f64 {
        60.0 / self.bpm
    }

    /// Segment boundaries are just consecutive beat pairs.
    pub fn segments(&self) -> impl Iterator<Item = (f64, f64)> + '_ {
        self.beat_times.windows(2).map(|w| (w[0], w[1]))
    }
}

/// Half-wave rectified log-mel spectral flux, summed over bands.
pub fn onset_envelope(spec: &Spectrogram) -> Result<OnsetEnvelope> {
    if spec.frames < 2 {
        return Err(CoreError::EmptyInput("need at least two frames for onset flux".into()));
    }
    let logmel = log_mel(spec);
    let mut values = vec![0.0; spec.frames];
    for f in 1..spec.frames {
        let mut acc = 0.0;
        for m in 0..MEL_BANDS {
            let d = logmel[f * MEL_BANDS + m] - logmel[(f - 1) * MEL_BANDS + m];
            if d > 0.0 {
                acc += d;
            }
        }
        values[f] = acc;
    }
    Ok(OnsetEnvelope { values })
}

/// Mean-removed, overlap-normalized autocorrelation at a frame lag.
fn autocorr(centered: &[f64], lag: usize) -> f64 {
    let n = centered.len();
    if lag >= n {
        return 0.0;
    }
    let mut acc = 0.0;
    for t in 0..n - lag {
        acc += centered[t] * centered[t + lag];
    }
    acc / (n - lag) as f64
}

/// Estimate the beat period from the onset envelope: prior-weighted
/// autocorrelation over the plausible lag range, with an octave correction
/// that halves the period when the half lag correlates almost as strongly
/// (fast tempos otherwise collapse onto their half-time alias).
pub fn estimate_tempo(onset: &OnsetEnvelope, params: &BeatParams) -> Result<f64> {
    let hop = onset.hop_seconds();
    let n = onset.values.len();
    let mean = onset.values.iter().sum::<f64>() / n as f64;
    let centered: Vec<f64> = onset.values.iter().map(|v| v - mean).collect();

    let min_lag = ((60.0 / params.max_bpm) / hop).round() as usize;
    let max_lag = ((60.0 / params.min_bpm) / hop).round() as usize;
    if max_lag + 2 >= n {
        return Err(CoreError::EmptyInput("signal too short for tempo estimation".into()));
    }
    if min_lag < 1 || min_lag >= max_lag {
        return Err(CoreError::InvalidArgument("degenerate tempo search range".into()));
    }

    let prior = |lag: usize| -> f64 {
        let period = lag as f64 * hop;
        let octaves = (period * params.prior_bpm / 60.0).log2() / params.prior_octaves;
        (-0.5 * octaves * octaves).exp()
    };

    let mut best_lag = 0;
    let mut best_score = f64::NEG_INFINITY;
    for lag in min_lag..=max_lag {
        let score = prior(lag) * autocorr(&centered, lag);
        if score > best_score {
            best_score = score;
            best_lag = lag;
        }
    }
    if best_score <= 0.0 {
        return Err(CoreError::NoTempo("no positive autocorrelation peak in tempo range".into()));
    }

    // Octave correction.
    let half = best_lag / 2;
    if half >= min_lag.max(1) {
        let r_full = autocorr(&centered, best_lag);
        let r_half = autocorr(&centered, half);
        if r_full > 0.0 && r_half > 0.8 * r_full {
            best_lag = half;
        }
    }
    Ok(60.0 / (best_lag as f64 * hop))
}

/// Dynamic-programming beat tracker: each frame scores its standardized
/// onset strength plus the best predecessor one roughly-periodic step back,
/// with the log-squared deviation from the target period penalized by
/// `alpha`. Beats are read off by backtracking from the best final score.
pub fn track_beats(onset: &OnsetEnvelope, bpm: f64, params: &BeatParams) -> Result<BeatGrid> {
    if bpm <= 0.0 || !bpm.is_finite() {
        return Err(CoreError::InvalidArgument("bpm must be positive".into()));
    }
    let hop = onset.hop_seconds();
    let period = (60.0 / bpm / hop).round() as usize;
    if period < 2 {
        return Err(CoreError::InvalidArgument("beat period below frame resolution".into()));
    }
    let n = onset.values.len();
    if n <= 2 * period {
        return Err(CoreError::EmptyInput("signal shorter than two beat periods".into()));
    }

    // Standardize the envelope so alpha has a signal-independent meaning.
    let mean = onset.values.iter().sum::<f64>() / n as f64;
    let var = onset.values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n as f64;
    let std = var.sqrt().max(1e-12);
    let o: Vec<f64> = onset.values.iter().map(|v| (v - mean) / std).collect();

    let lo = (period / 2).max(1);
    let hi = 2 * period;
    let mut score = vec![0.0; n];
    let mut back: Vec<Option<usize>> = vec![None; n];
    for t in 0..n {
        score[t] = o[t];
        let mut best = 0.0;
        let mut best_prev = None;
        for tau in lo..=hi.min(t) {
            let dev = (tau as f64 / period as f64).ln();
            let cand = score[t - tau] - params.alpha * dev * dev;
            if best_prev.is_none() || cand > best {
                best = cand;
                best_prev = Some(t - tau);
            }
        }
        if let Some(p) = best_prev {
            score[t] += best;
            back[t] = Some(p);
        }
    }

    // Start the backtrace at the best score over the last period so the
    // trailing partial beat does not truncate the chain.
    let tail_start = n - period.min(n);
    let end = (tail_start..n)
        .max_by(|&a, &b| score[a].partial_cmp(&score[b]).unwrap())
        .unwrap();
    let mut frames = vec![end];
    while let Some(p) = back[*frames.last().unwrap()] {
        frames.push(p);
    }
    frames.reverse();

    // Drop silent lead-in "beats" with no onset support.
    let threshold = 0.0;
    let first_real = frames.iter().position(|&f| o[f] > threshold).unwrap_or(0);
    let frames = &frames[first_real..];
    if frames.len() < 2 {
        return Err(CoreError::Degenerate("fewer than two beats tracked".into()));
    }
    Ok(BeatGrid {
        bpm,
        beat_times: frames.iter().map(|&f| onset.frame_time(f)).collect(),
    })
}

/// Convenience: onset envelope, tempo, then beats in one call.
pub fn detect_beats(spec: &Spectrogram, params: &BeatParams) -> Result<BeatGrid> {
    let onset = onset_envelope(spec)?;
    let bpm = estimate_tempo(&onset, params)?;
    track_beats(&onset, bpm, params)
}
