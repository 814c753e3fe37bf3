//! Audio front end: resampling, spectral analysis, beat tracking and the
//! beat-aligned feature vectors consumed by the two model stages.

pub mod beat;
pub mod spectral;

pub use beat::{detect_beats, estimate_tempo, onset_envelope, track_beats, BeatGrid, BeatParams, OnsetEnvelope};
pub use spectral::{chroma12, log_mel, mfcc40, stft, Spectrogram, FRAME_LEN, HOP, SAMPLE_RATE};

use std::f64::consts::PI;

use crate::error::{CoreError, Result};

/// Mono waveform at a known sample rate.
#[derive(Debug, Clone)]
pub struct WaveBuffer {
    pub sample_rate: u32,
    pub samples: Vec<f64>,
}

impl WaveBuffer {
    pub fn new(sample_rate: u32, samples: Vec<f64>) -> Result<WaveBuffer> {
        if sample_rate == 0 {
            return Err(CoreError::InvalidArgument("sample rate must be positive".into()));
        }
        if samples.is_empty() {
            return Err(CoreError::EmptyInput("empty waveform".into()));
        }
        Ok(WaveBuffer { sample_rate, samples })
    }

    pub fn duration(&self) -> f64 {
        self.samples.len() as f64 / self.sample_rate as f64
    }

    /// Linear-interpolation resample to the analysis rate. A no-op when the
    /// buffer is already at the target rate.
    pub fn to_analysis_rate(&self) -> WaveBuffer {
        if self.sample_rate == SAMPLE_RATE {
            return self.clone();
        }
        let ratio = self.sample_rate as f64 / SAMPLE_RATE as f64;
        let out_len = (self.samples.len() as f64 / ratio).floor() as usize;
        let samples = (0..out_len)
            .map(|i| {
                let pos = i as f64 * ratio;
                let lo = pos.floor() as usize;
                let hi = (lo + 1).min(self.samples.len() - 1);
                let frac = pos - lo as f64;
                self.samples[lo] * (1.0 - frac) + self.samples[hi] * frac
            })
            .collect();
        WaveBuffer { sample_rate: SAMPLE_RATE, samples }
    }
}

/// One beat's stage-1 conditioning vector: 40 timbre dims plus 12 chroma
/// dims, Hamming-weighted over a fixed window centered on the beat.
pub const BEAT_FEATURE_DIM: usize = 52;
/// One segment's stage-2 conditioning vector: the 40 timbre dims,
/// Hamming-weighted across the whole inter-beat span.
pub const SEGMENT_FEATURE_DIM: usize = 40;
/// Width of the per-beat analysis window, seconds.
pub const BEAT_WINDOW_SEC: f64 = 0.8;

#[derive(Debug, Clone)]
pub struct BeatWindowFeature {
    pub beat_time: f64,
    pub values: [f64; BEAT_FEATURE_DIM],
}

#[derive(Debug, Clone)]
pub struct SegmentFeature {
    pub start_time: f64,
    pub end_time: f64,
    pub values: [f64; SEGMENT_FEATURE_DIM],
}

fn hamming_weight(pos: f64) -> f64 {
    // pos in [0, 1] across the window.
    0.54 - 0.46 * (2.0 * PI * pos).cos()
}

/// Weighted average of per-frame features over frames whose centers fall in
/// `[start, end)`, Hamming-tapered across the span. Falls back to the
/// nearest frame when the span covers none.
fn windowed_average(
    per_frame: &[f64],
    frames: usize,
    dim: usize,
    start: f64,
    end: f64,
    out: &mut [f64],
) {
    let mut total = 0.0;
    out.fill(0.0);
    for f in 0..frames {
        let t = spectral::frame_time(f);
        if t >= start && t < end {
            let w = hamming_weight((t - start) / (end - start));
            total += w;
            for d in 0..dim {
                out[d] += w * per_frame[f * dim + d];
            }
        }
    }
    if total > 1e-12 {
        for d in 0..dim {
            out[d] /= total;
        }
    } else {
        let center = (start + end) / 2.0;
        let nearest = (0..frames)
            .min_by(|&a, &b| {
                let da = (spectral::frame_time(a) - center).abs();
                let db = (spectral::frame_time(b) - center).abs();
                da.partial_cmp(&db).unwrap()
            })
            .unwrap_or(0);
        out.copy_from_slice(&per_frame[nearest * dim..(nearest + 1) * dim]);
    }
}

/// Stage-1 features: one 52-d vector per beat.
pub fn beat_features(spec: &Spectrogram, beat_times: &[f64]) -> Result<Vec<BeatWindowFeature>> {
    if beat_times.is_empty() {
        return Err(CoreError::EmptyInput("no beats to featurize".into()));
    }
    let mfcc = mfcc40(spec);
    let chroma = chroma12(spec);
    let half = BEAT_WINDOW_SEC / 2.0;
    let mut out = Vec::with_capacity(beat_times.len());
    for &t in beat_times {
        let mut values = [0.0; BEAT_FEATURE_DIM];
        windowed_average(&mfcc, spec.frames, 40, t - half, t + half, &mut values[..40]);
        windowed_average(&chroma, spec.frames, 12, t - half, t + half, &mut values[40..]);
        out.push(BeatWindowFeature { beat_time: t, values });
    }
    Ok(out)
}

/// Stage-2 features: one 40-d vector per inter-beat segment.
pub fn segment_features(spec: &Spectrogram, beat_times: &[f64]) -> Result<Vec<SegmentFeature>> {
    if beat_times.len() < 2 {
        return Err(CoreError::EmptyInput("need at least two beats for segments".into()));
    }
    let mfcc = mfcc40(spec);
    let mut out = Vec::with_capacity(beat_times.len() - 1);
    for w in beat_times.windows(2) {
        if w[1] <= w[0] {
            return Err(CoreError::InvalidArgument("beat times must increase".into()));
        }
        let mut values = [0.0; SEGMENT_FEATURE_DIM];
        windowed_average(&mfcc, spec.frames, 40, w[0], w[1], &mut values);
        out.push(SegmentFeature { start_time: w[0], end_time: w[1], values });
    }
    Ok(out)
}
