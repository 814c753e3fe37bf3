//! Dataset manifests: JSON lists of (audio, motion) pairs with a
//! train/test split tag. All paths resolve relative to the manifest file
//! and are checked at load time, not mid-training.

use std::collections::HashSet;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{in_file, Result, ToolError};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Train,
    Test,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ManifestEntry {
    pub audio: PathBuf,
    pub motion: PathBuf,
    pub split: Split,
    #[serde(default)]
    pub genre: Option<String>,
    /// Audio duration in seconds, informational.
    #[serde(default)]
    pub duration: Option<f64>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct DatasetManifest {
    pub entries: Vec<ManifestEntry>,
}

impl DatasetManifest {
    /// Loads and validates a manifest: JSON well-formed, no duplicate
    /// pairs, every referenced path resolvable right now.
    pub fn load(path: &Path) -> Result<DatasetManifest> {
        let text = std::fs::read_to_string(path).map_err(|e| in_file(path, e))?;
        let mut manifest: DatasetManifest =
            serde_json::from_str(&text).map_err(|e| in_file(path, e))?;
        if manifest.entries.is_empty() {
            return Err(in_file(path, "manifest has no entries"));
        }
        let base = path.parent().unwrap_or_else(|| Path::new("."));
        let mut seen = HashSet::new();
        for e in &mut manifest.entries {
            e.audio = base.join(&e.audio);
            e.motion = base.join(&e.motion);
            if !seen.insert((e.audio.clone(), e.motion.clone())) {
                return Err(ToolError::Data(format!(
                    "duplicate manifest entry: {} + {}",
                    e.audio.display(),
                    e.motion.display()
                )));
            }
            for p in [&e.audio, &e.motion] {
                if !p.is_file() {
                    return Err(ToolError::Data(format!(
                        "manifest references a missing file: {}",
                        p.display()
                    )));
                }
            }
        }
        Ok(manifest)
    }

    pub fn split(&self, split: Split) -> Vec<&ManifestEntry> {
        self.entries.iter().filter(|e| e.split == split).collect()
    }
}
