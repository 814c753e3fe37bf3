//! WAV ingestion and (for fixtures) mono output.

use std::path::Path;

use dancegen_core::audio::WaveBuffer;

use crate::error::{in_file, Result};

/// Reads a WAV file into a mono float buffer at its native sample rate.
/// Integer formats are scaled to [-1, 1]; multi-channel audio is downmixed
/// by averaging.
pub fn read_wav(path: &Path) -> Result<WaveBuffer> {
    let mut reader = hound::WavReader::open(path).map_err(|e| in_file(path, e))?;
    let spec = reader.spec();
    let channels = spec.channels as usize;
    if channels == 0 {
        return Err(in_file(path, "zero channels"));
    }
    let interleaved: Vec<f64> = match spec.sample_format {
        hound::SampleFormat::Float => reader
            .samples::<f32>()
            .map(|s| s.map(|v| v as f64))
            .collect::<std::result::Result<_, _>>()
            .map_err(|e| in_file(path, e))?,
        hound::SampleFormat::Int => {
            let scale = (1i64 << (spec.bits_per_sample - 1)) as f64;
            reader
                .samples::<i32>()
                .map(|s| s.map(|v| v as f64 / scale))
                .collect::<std::result::Result<_, _>>()
                .map_err(|e| in_file(path, e))?
        }
    };
    let frames = interleaved.len() / channels;
    let mono: Vec<f64> = (0..frames)
        .map(|f| interleaved[f * channels..(f + 1) * channels].iter().sum::<f64>() / channels as f64)
        .collect();
    WaveBuffer::new(spec.sample_rate, mono).map_err(Into::into)
}

/// Writes a mono 32-bit float WAV; used for fixtures and round trips.
pub fn write_wav(path: &Path, wave: &WaveBuffer) -> Result<()> {
    let spec = hound::WavSpec {
        channels: 1,
        sample_rate: wave.sample_rate,
        bits_per_sample: 32,
        sample_format: hound::SampleFormat::Float,
    };
    let mut writer = hound::WavWriter::create(path, spec).map_err(|e| in_file(path, e))?;
    for &s in &wave.samples {
        writer.write_sample(s as f32).map_err(|e| in_file(path, e))?;
    }
    writer.finalize().map_err(|e| in_file(path, e))
}
