//! Short-time spectral analysis: STFT frames, mel filterbank, MFCCs and
//! chroma at the fixed 22050 Hz / 25 ms / 10 ms analysis grid.

use std::f64::consts::PI;
use std::sync::Arc;

use rustfft::num_complex::Complex;
use rustfft::{Fft, FftPlanner};

use crate::error::{CoreError, Result};

pub const SAMPLE_RATE: u32 = 22050;
/// 25 ms analysis window.
pub const FRAME_LEN: usize = 551;
/// 10 ms hop.
pub const HOP: usize = 220;
pub const FFT_LEN: usize = 1024;
pub const MEL_BANDS: usize = 40;
pub const MFCC_COEFFS: usize = 13;

/// Power spectrogram: `frames x (FFT_LEN/2 + 1)` row-major, Hann-windowed
/// 25 ms frames every 10 ms, zero-padded to the FFT length.
pub struct Spectrogram {
    pub frames: usize,
    pub bins: usize,
    pub power: Vec<f64>,
}

fn hann(n: usize) -> Vec<f64> {
    (0..n).map(|i| 0.5 - 0.5 * (2.0 * PI * i as f64 / n as f64).cos()).collect()
}

pub fn stft(samples: &[f64]) -> Result<Spectrogram> {
    if samples.len() < FRAME_LEN {
        return Err(CoreError::EmptyInput("signal shorter than one analysis frame".into()));
    }
    let frames = 1 + (samples.len() - FRAME_LEN) / HOP;
    let bins = FFT_LEN / 2 + 1;
    let window = hann(FRAME_LEN);
    let fft: Arc<dyn Fft<f64>> = FftPlanner::new().plan_fft_forward(FFT_LEN);
    let mut power = vec![0.0; frames * bins];
    let mut buf = vec![Complex::new(0.0, 0.0); FFT_LEN];
    for f in 0..frames {
        let start = f * HOP;
        for i in 0..FFT_LEN {
            let v = if i < FRAME_LEN { samples[start + i] * window[i] } else { 0.0 };
            buf[i] = Complex::new(v, 0.0);
        }
        fft.process(&mut buf);
        for b in 0..bins {
            power[f * bins + b] = buf[b].norm_sqr();
        }
    }
    Ok(Spectrogram { frames, bins, power })
}

fn hz_to_mel(hz: f64) -> f64 {
    2595.0 * (1.0 + hz / 700.0).log10()
}

fn mel_to_hz(mel: f64) -> f64 {
    700.0 * (10f64.powf(mel / 2595.0) - 1.0)
}

/// Triangular mel filterbank, `MEL_BANDS x bins` row-major, spanning
/// 0 Hz to Nyquist.
pub fn mel_filterbank(bins: usize) -> Vec<f64> {
    let nyquist = SAMPLE_RATE as f64 / 2.0;
    let mel_max = hz_to_mel(nyquist);
    let centers: Vec<f64> = (0..MEL_BANDS + 2)
        .map(|i| mel_to_hz(mel_max * i as f64 / (MEL_BANDS + 1) as f64))
        .collect();
    let mut bank = vec![0.0; MEL_BANDS * bins];
    for m in 0..MEL_BANDS {
        let (lo, mid, hi) = (centers[m], centers[m + 1], centers[m + 2]);
        for b in 0..bins {
            let hz = b as f64 * nyquist / (bins - 1) as f64;
            let w = if hz <= lo || hz >= hi {
                0.0
            } else if hz <= mid {
                (hz - lo) / (mid - lo)
            } else {
                (hi - hz) / (hi - mid)
            };
            bank[m * bins + b] = w;
        }
    }
    bank
}

/// Log-mel energies, `frames x MEL_BANDS` row-major.
pub fn log_mel(spec: &Spectrogram) -> Vec<f64> {
    let bank = mel_filterbank(spec.bins);
    let mut out = vec![0.0; spec.frames * MEL_BANDS];
    for f in 0..spec.frames {
        for m in 0..MEL_BANDS {
            let mut acc = 0.0;
            for b in 0..spec.bins {
                acc += bank[m * spec.bins + b] * spec.power[f * spec.bins + b];
            }
            out[f * MEL_BANDS + m] = (acc + 1e-10).ln();
        }
    }
    out
}

/// 40-d per-frame timbre vector: 13 MFCCs, their deltas and delta-deltas,
/// plus log frame energy. `frames x 40` row-major.
pub fn mfcc40(spec: &Spectrogram) -> Vec<f64> {
    let logmel = log_mel(spec);
    let frames = spec.frames;
    // DCT-II over the mel axis, coefficients 0..13.
    let mut mfcc = vec![0.0; frames * MFCC_COEFFS];
    for f in 0..frames {
        for c in 0..MFCC_COEFFS {
            let mut acc = 0.0;
            for m in 0..MEL_BANDS {
                acc += logmel[f * MEL_BANDS + m]
                    * (PI * c as f64 * (m as f64 + 0.5) / MEL_BANDS as f64).cos();
            }
            mfcc[f * MFCC_COEFFS + c] = acc;
        }
    }
    let delta = frame_delta(&mfcc, frames, MFCC_COEFFS);
    let delta2 = frame_delta(&delta, frames, MFCC_COEFFS);
    let mut out = vec![0.0; frames * 40];
    for f in 0..frames {
        out[f * 40..f * 40 + 13].copy_from_slice(&mfcc[f * 13..(f + 1) * 13]);
        out[f * 40 + 13..f * 40 + 26].copy_from_slice(&delta[f * 13..(f + 1) * 13]);
        out[f * 40 + 26..f * 40 + 39].copy_from_slice(&delta2[f * 13..(f + 1) * 13]);
        let energy: f64 = (0..spec.bins).map(|b| spec.power[f * spec.bins + b]).sum();
        out[f * 40 + 39] = (energy + 1e-10).ln();
    }
    out
}

/// Central differences along the frame axis, clamped at the edges.
fn frame_delta(x: &[f64], frames: usize, dim: usize) -> Vec<f64> {
    let mut out = vec![0.0; frames * dim];
    for f in 0..frames {
        let prev = f.saturating_sub(1);
        let next = (f + 1).min(frames - 1);
        for d in 0..dim {
            out[f * dim + d] = 0.5 * (x[next * dim + d] - x[prev * dim + d]);
        }
    }
    out
}

/// 12-d chroma (pitch-class energy, C-based, A4 = 440 Hz), `frames x 12`
/// row-major, each frame normalized to unit sum when non-silent.
pub fn chroma12(spec: &Spectrogram) -> Vec<f64> {
    let nyquist = SAMPLE_RATE as f64 / 2.0;
    // Pitch class of each bin; skip bins below ~30 Hz where pitch is moot.
    let class: Vec<Option<usize>> = (0..spec.bins)
        .map(|b| {
            let hz = b as f64 * nyquist / (spec.bins - 1) as f64;
            if hz < 30.0 {
                None
            } else {
                let midi = 69.0 + 12.0 * (hz / 440.0).log2();
                Some((midi.round().rem_euclid(12.0)) as usize % 12)
            }
        })
        .collect();
    let mut out = vec![0.0; spec.frames * 12];
    for f in 0..spec.frames {
        for b in 0..spec.bins {
            if let Some(c) = class[b] {
                out[f * 12 + c] += spec.power[f * spec.bins + b];
            }
        }
        let total: f64 = out[f * 12..(f + 1) * 12].iter().sum();
        if total > 1e-12 {
            for c in 0..12 {
                out[f * 12 + c] /= total;
            }
        }
    }
    out
}

/// Time of a frame's window center, in seconds.
pub fn frame_time(frame: usize) -> f64 {
    (frame * HOP) as f64 / SAMPLE_RATE as f64 + FRAME_LEN as f64 / (2.0 * SAMPLE_RATE as f64)
}
