//! The motion-file container: beat grid, key poses and the 99 channels of
//! TCB segments, stored as human-inspectable text headers with
//! base64-embedded little-endian 64-bit float blocks for exact numerics.

use std::path::Path;

use base64::engine::general_purpose::STANDARD as B64;
use base64::Engine;

use dancegen_core::curves::{CurveSet, Knot, MotionCurve, TcbSegment};
use dancegen_core::kinematics::{KeyPose, SkeletonTopology, CANONICAL_CHANNELS};
use dancegen_core::kinematics::Quaternion;
use dancegen_core::pipeline::{align_channels, keypose_channels, keypose_to_token};

use crate::error::{in_file, Result, ToolError};

pub const MOTION_FORMAT_VERSION: u32 = 1;
/// Scalars per serialized segment: four (time, value) knots plus t, c, b.
const SEGMENT_SCALARS: usize = 11;
/// Scalars per serialized key pose (per-joint position + quaternion).
const KEYPOSE_SCALARS: usize = 168;

/// One dance: a beat grid, one key pose per beat, and a full curve set.
#[derive(Debug, Clone, PartialEq)]
pub struct MotionFile {
    pub fps_hint: f64,
    /// Free-text description of the source audio (e.g. a file name or a
    /// content hash); "none" when unknown.
    pub audio_fingerprint: String,
    pub key_poses: Vec<KeyPose>,
    pub curves: CurveSet,
}

impl MotionFile {
    pub fn new(
        fps_hint: f64,
        audio_fingerprint: String,
        key_poses: Vec<KeyPose>,
        curves: CurveSet,
    ) -> Result<MotionFile> {
        let m = MotionFile { fps_hint, audio_fingerprint, key_poses, curves };
        m.validate()?;
        Ok(m)
    }

    pub fn beat_times(&self) -> &[f64] {
        &self.curves.beat_times
    }

    /// Structural invariants: 99 channels, segments = beats - 1 (enforced
    /// by `CurveSet` per channel), one key pose per beat, and every
    /// boundary knot bit-equal to the hemisphere-aligned key-pose channel
    /// value it is pinned to.
    pub fn validate(&self) -> Result<()> {
        let beats = self.curves.beat_times.len();
        if self.curves.curves.len() != CANONICAL_CHANNELS {
            return Err(ToolError::Data(format!(
                "corrupt motion file: {} channels, expected {CANONICAL_CHANNELS}",
                self.curves.curves.len()
            )));
        }
        if self.key_poses.len() != beats {
            return Err(ToolError::Data(format!(
                "corrupt motion file: {} key poses for {beats} beats",
                self.key_poses.len()
            )));
        }
        let topology = SkeletonTopology::default_canonical();
        let mut aligned: Vec<Vec<f64>> = Vec::with_capacity(beats);
        for kp in &self.key_poses {
            let mut ch = keypose_channels(&topology, kp)?;
            if let Some(prev) = aligned.last() {
                align_channels(prev, &mut ch);
            }
            aligned.push(ch);
        }
        for (c, curve) in self.curves.curves.iter().enumerate() {
            for (k, seg) in curve.segments.iter().enumerate() {
                if seg.start_knot.value != aligned[k][c] || seg.end_knot.value != aligned[k + 1][c] {
                    return Err(ToolError::Data(format!(
                        "corrupt motion file: channel {c} segment {k} boundary knots \
                         ({}, {}) do not match the key-pose channel values ({}, {})",
                        seg.start_knot.value,
                        seg.end_knot.value,
                        aligned[k][c],
                        aligned[k + 1][c]
                    )));
                }
            }
        }
        Ok(())
    }
}

fn encode_block(values: &[f64]) -> String {
    let mut bytes = Vec::with_capacity(values.len() * 8);
    for v in values {
        bytes.extend_from_slice(&v.to_le_bytes());
    }
    B64.encode(bytes)
}

fn decode_block(text: &str, expect: usize, what: &str) -> Result<Vec<f64>> {
    let bytes = B64
        .decode(text.trim())
        .map_err(|e| ToolError::Data(format!("corrupt motion file: bad base64 in {what}: {e}")))?;
    if bytes.len() != expect * 8 {
        return Err(ToolError::Data(format!(
            "corrupt motion file: {what} block holds {} bytes, expected {}",
            bytes.len(),
            expect * 8
        )));
    }
    Ok(bytes.chunks(8).map(|c| f64::from_le_bytes(c.try_into().unwrap())).collect())
}

pub fn write_motion_file(m: &MotionFile, path: &Path) -> Result<()> {
    m.validate()?;
    let beats = m.curves.beat_times.len();
    let mut out = String::new();
    out.push_str(&format!("dancegen-motion {MOTION_FORMAT_VERSION}\n"));
    out.push_str(&format!("fps-hint {}\n", m.fps_hint));
    out.push_str(&format!("audio-fingerprint {}\n", m.audio_fingerprint));
    out.push_str(&format!("beats {beats}\n"));
    out.push_str(&encode_block(&m.curves.beat_times));
    out.push('\n');
    out.push_str(&format!("keyposes {beats} {KEYPOSE_SCALARS}\n"));
    let kp_flat: Vec<f64> = m.key_poses.iter().flat_map(|kp| keypose_to_token(kp)).collect();
    out.push_str(&encode_block(&kp_flat));
    out.push('\n');
    out.push_str(&format!("channels {CANONICAL_CHANNELS} segments {}\n", beats - 1));
    for curve in &m.curves.curves {
        let mut vals = Vec::with_capacity(curve.segments.len() * SEGMENT_SCALARS);
        for s in &curve.segments {
            vals.extend_from_slice(&[
                s.start_knot.time,
                s.start_knot.value,
                s.inner1.time,
                s.inner1.value,
                s.inner2.time,
                s.inner2.value,
                s.end_knot.time,
                s.end_knot.value,
                s.tension,
                s.continuity,
                s.bias,
            ]);
        }
        out.push_str(&format!("channel {}\n", curve.channel_id));
        out.push_str(&encode_block(&vals));
        out.push('\n');
    }
    std::fs::write(path, out).map_err(|e| in_file(path, e))
}

pub fn read_motion_file(path: &Path) -> Result<MotionFile> {
    let text = std::fs::read_to_string(path).map_err(|e| in_file(path, e))?;
    let mut lines = text.lines();
    let mut next = |what: &str| -> Result<&str> {
        lines
            .next()
            .ok_or_else(|| ToolError::Data(format!("corrupt motion file: missing {what}")))
    };

    let header = next("header")?;
    let mut hp = header.split_whitespace();
    if hp.next() != Some("dancegen-motion") {
        return Err(in_file(path, "not a motion file (bad header)"));
    }
    let version: u32 = hp
        .next()
        .and_then(|v| v.parse().ok())
        .ok_or_else(|| in_file(path, "unreadable format version"))?;
    if version != MOTION_FORMAT_VERSION {
        return Err(ToolError::Data(format!(
            "unsupported motion file version {version}, expected {MOTION_FORMAT_VERSION}"
        )));
    }

    let fps_hint: f64 = parse_kv(next("fps-hint")?, "fps-hint")?;
    let audio_fingerprint = next("audio-fingerprint")?
        .strip_prefix("audio-fingerprint ")
        .ok_or_else(|| in_file(path, "missing audio-fingerprint line"))?
        .to_string();

    let beats: usize = parse_kv(next("beats")?, "beats")?;
    if beats < 2 {
        return Err(ToolError::Data(format!("corrupt motion file: {beats} beats, need at least 2")));
    }
    let beat_times = decode_block(next("beat times")?, beats, "beat times")?;

    let kp_header = next("keyposes header")?;
    let mut kh = kp_header.split_whitespace();
    if kh.next() != Some("keyposes")
        || kh.next() != Some(beats.to_string().as_str())
        || kh.next() != Some(KEYPOSE_SCALARS.to_string().as_str())
    {
        return Err(ToolError::Data(format!(
            "corrupt motion file: bad keypose header {kp_header:?}"
        )));
    }
    let kp_flat = decode_block(next("keyposes")?, beats * KEYPOSE_SCALARS, "key poses")?;
    // Bit-preserving key-pose decode: quaternion components are taken as
    // stored (norms only checked) so the round trip is lossless.
    let mut key_poses = Vec::with_capacity(beats);
    for (b, token) in kp_flat.chunks(KEYPOSE_SCALARS).enumerate() {
        let mut positions = Vec::with_capacity(KEYPOSE_SCALARS / 7);
        let mut rotations = Vec::with_capacity(KEYPOSE_SCALARS / 7);
        for j in 0..KEYPOSE_SCALARS / 7 {
            let c = &token[j * 7..(j + 1) * 7];
            if c.iter().any(|v| !v.is_finite()) {
                return Err(ToolError::Data(format!(
                    "corrupt motion file: non-finite key pose {b} joint {j}"
                )));
            }
            positions.push([c[0], c[1], c[2]]);
            let q = Quaternion { w: c[3], x: c[4], y: c[5], z: c[6] };
            if (q.norm() - 1.0).abs() > 1e-3 {
                return Err(ToolError::Data(format!(
                    "corrupt motion file: key pose {b} joint {j} quaternion norm {}",
                    q.norm()
                )));
            }
            rotations.push(q);
        }
        key_poses.push(KeyPose { positions, rotations });
    }

    let ch_header = next("channels header")?;
    let mut ch = ch_header.split_whitespace();
    let (Some("channels"), Some(nc), Some("segments"), Some(ns)) =
        (ch.next(), ch.next(), ch.next(), ch.next())
    else {
        return Err(ToolError::Data(format!(
            "corrupt motion file: bad channel header {ch_header:?}"
        )));
    };
    let n_channels: usize =
        nc.parse().map_err(|_| in_file(path, "unreadable channel count"))?;
    let n_segments: usize =
        ns.parse().map_err(|_| in_file(path, "unreadable segment count"))?;
    if n_channels != CANONICAL_CHANNELS {
        return Err(ToolError::Data(format!(
            "corrupt motion file: {n_channels} channels, expected {CANONICAL_CHANNELS}"
        )));
    }
    if n_segments != beats - 1 {
        return Err(ToolError::Data(format!(
            "corrupt motion file: {n_segments} segments for {beats} beats"
        )));
    }

    let mut curves = Vec::with_capacity(n_channels);
    for c in 0..n_channels {
        let label = next("channel label")?;
        if label != format!("channel {c}") {
            return Err(ToolError::Data(format!(
                "corrupt motion file: expected 'channel {c}', found {label:?}"
            )));
        }
        let vals = decode_block(
            next("channel data")?,
            n_segments * SEGMENT_SCALARS,
            &format!("channel {c}"),
        )?;
        let mut segments = Vec::with_capacity(n_segments);
        for (k, v) in vals.chunks(SEGMENT_SCALARS).enumerate() {
            segments.push(
                TcbSegment::new(
                    Knot::new(v[0], v[1]),
                    Knot::new(v[2], v[3]),
                    Knot::new(v[4], v[5]),
                    Knot::new(v[6], v[7]),
                    v[8],
                    v[9],
                    v[10],
                )
                .map_err(|e| {
                    ToolError::Data(format!("corrupt motion file: channel {c} segment {k}: {e}"))
                })?,
            );
        }
        curves.push(MotionCurve::new(c, segments)?);
    }
    let curves = CurveSet::new(curves, beat_times)?;
    MotionFile::new(fps_hint, audio_fingerprint, key_poses, curves)
}

fn parse_kv<T: std::str::FromStr>(line: &str, key: &str) -> Result<T> {
    let mut parts = line.split_whitespace();
    if parts.next() != Some(key) {
        return Err(ToolError::Data(format!("corrupt motion file: expected '{key}' line, found {line:?}")));
    }
    parts
        .next()
        .and_then(|v| v.parse().ok())
        .ok_or_else(|| ToolError::Data(format!("corrupt motion file: unreadable {key} value")))
}
