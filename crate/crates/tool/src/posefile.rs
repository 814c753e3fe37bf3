//! Dense pose-sequence files: a small text header followed by one row of
//! 99 whitespace-separated scalars per frame (root x,y,z then joints 0..23
//! each w,x,y,z). Scalars are printed in Rust's shortest round-trip form,
//! so write→read is bit-exact.

use std::path::Path;

use dancegen_core::kinematics::{Pose, PoseSequence, Quaternion, CANONICAL_CHANNELS};

use crate::error::{in_file, Result, ToolError};

pub const POSE_FORMAT_VERSION: u32 = 1;

/// Import summary: the sequence plus the count of rows whose quaternions
/// deviated from unit norm by more than 1e-3 and were renormalized.
#[derive(Debug)]
pub struct PoseImport {
    pub sequence: PoseSequence,
    pub renormalized_rows: usize,
}

pub fn write_pose_sequence(seq: &PoseSequence, path: &Path) -> Result<()> {
    let mut out = String::new();
    out.push_str(&format!("dancegen-pose {POSE_FORMAT_VERSION}\n"));
    out.push_str(&format!("fps {}\n", seq.fps));
    out.push_str(&format!("start {}\n", seq.start_time));
    out.push_str(&format!("frames {}\n", seq.frames.len()));
    for pose in &seq.frames {
        let channels = pose.to_channels();
        let row: Vec<String> = channels.iter().map(|v| format!("{v}")).collect();
        out.push_str(&row.join(" "));
        out.push('\n');
    }
    std::fs::write(path, out).map_err(|e| in_file(path, e))
}

pub fn import_pose_sequence(path: &Path) -> Result<PoseImport> {
    let text = std::fs::read_to_string(path).map_err(|e| in_file(path, e))?;
    let mut lines = text.lines().enumerate();
    let mut header = |what: &str| -> Result<&str> {
        lines
            .next()
            .map(|(_, l)| l)
            .ok_or_else(|| in_file(path, format!("missing {what} line")))
    };

    let first = header("header")?;
    let mut hp = first.split_whitespace();
    if hp.next() != Some("dancegen-pose") {
        return Err(in_file(path, "not a pose-sequence file (bad header)"));
    }
    let version: u32 = hp
        .next()
        .and_then(|v| v.parse().ok())
        .ok_or_else(|| in_file(path, "unreadable format version"))?;
    if version != POSE_FORMAT_VERSION {
        return Err(ToolError::Data(format!(
            "unsupported pose file version {version}, expected {POSE_FORMAT_VERSION}"
        )));
    }
    let fps: f64 = parse_kv(header("fps")?, "fps")?;
    let start: f64 = parse_kv(header("start")?, "start")?;
    let frame_count: usize = parse_kv(header("frames")?, "frames")?;
    if fps <= 0.0 {
        return Err(in_file(path, "fps must be positive"));
    }

    let mut frames = Vec::with_capacity(frame_count);
    let mut renormalized = 0usize;
    for (idx, line) in lines {
        if line.trim().is_empty() {
            continue;
        }
        let row: Vec<f64> = line
            .split_whitespace()
            .map(|t| t.parse::<f64>())
            .collect::<std::result::Result<_, _>>()
            .map_err(|_| {
                ToolError::Data(format!("{}: unreadable scalar on row {}", path.display(), idx + 1))
            })?;
        if row.len() != CANONICAL_CHANNELS {
            return Err(ToolError::Data(format!(
                "{}: row {} has {} scalars, expected {CANONICAL_CHANNELS}",
                path.display(),
                idx + 1,
                row.len()
            )));
        }
        let root_position = [row[0], row[1], row[2]];
        let mut joint_rotations = Vec::with_capacity((CANONICAL_CHANNELS - 3) / 4);
        let mut row_off_norm = false;
        for c in row[3..].chunks(4) {
            let norm = (c[0] * c[0] + c[1] * c[1] + c[2] * c[2] + c[3] * c[3]).sqrt();
            if !norm.is_finite() || norm < 1e-12 {
                return Err(ToolError::Data(format!(
                    "{}: row {} holds a degenerate quaternion",
                    path.display(),
                    idx + 1
                )));
            }
            if (norm - 1.0).abs() > 1e-3 {
                row_off_norm = true;
            }
            // Keep already-unit rows bit-exact; renormalize anything else.
            if (norm - 1.0).abs() <= 1e-12 && c[0] >= 0.0 {
                joint_rotations.push(Quaternion { w: c[0], x: c[1], y: c[2], z: c[3] });
            } else {
                joint_rotations.push(Quaternion::new(c[0], c[1], c[2], c[3])?);
            }
        }
        if row_off_norm {
            renormalized += 1;
        }
        frames.push(Pose { root_position, joint_rotations });
    }
    if frames.len() != frame_count {
        return Err(ToolError::Data(format!(
            "{}: header promises {frame_count} frames, file holds {}",
            path.display(),
            frames.len()
        )));
    }
    Ok(PoseImport {
        sequence: PoseSequence::new(fps, start, frames)?,
        renormalized_rows: renormalized,
    })
}

fn parse_kv<T: std::str::FromStr>(line: &str, key: &str) -> Result<T> {
    let mut parts = line.split_whitespace();
    if parts.next() != Some(key) {
        return Err(ToolError::Data(format!("expected '{key}' header line, found {line:?}")));
    }
    parts
        .next()
        .and_then(|v| v.parse().ok())
        .ok_or_else(|| ToolError::Data(format!("unreadable {key} value")))
}
