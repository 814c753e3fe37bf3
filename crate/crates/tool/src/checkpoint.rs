//! Checkpoint files: a JSON envelope naming the stage and model size, with
//! the parameter store embedded as base64 of its binary container.

use std::path::Path;

use base64::engine::general_purpose::STANDARD as B64;
use base64::Engine;
use serde::{Deserialize, Serialize};

use dancegen_core::nn::params::ParamStore;
use dancegen_core::pipeline::ModelSize;

use crate::error::{in_file, Result, ToolError};

pub const CHECKPOINT_FORMAT_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SizeTag {
    Small,
    Full,
}

impl SizeTag {
    pub fn to_model_size(self) -> ModelSize {
        match self {
            SizeTag::Small => ModelSize::small(),
            SizeTag::Full => ModelSize::full(),
        }
    }
}

impl std::str::FromStr for SizeTag {
    type Err = ToolError;
    fn from_str(s: &str) -> Result<SizeTag> {
        match s {
            "small" => Ok(SizeTag::Small),
            "full" => Ok(SizeTag::Full),
            other => Err(ToolError::Usage(format!("unknown model size {other:?} (small | full)"))),
        }
    }
}

#[derive(Serialize, Deserialize)]
struct Envelope {
    format: String,
    version: u32,
    stage: u8,
    size: SizeTag,
    step: u64,
    params: String,
}

pub struct Checkpoint {
    pub stage: u8,
    pub size: SizeTag,
    pub step: u64,
    pub store: ParamStore,
}

pub fn write_checkpoint(ckpt: &Checkpoint, path: &Path) -> Result<()> {
    let env = Envelope {
        format: "dancegen-checkpoint".into(),
        version: CHECKPOINT_FORMAT_VERSION,
        stage: ckpt.stage,
        size: ckpt.size,
        step: ckpt.step,
        params: B64.encode(ckpt.store.to_bytes()),
    };
    let text = serde_json::to_string(&env).expect("checkpoint envelope serializes");
    std::fs::write(path, text).map_err(|e| in_file(path, e))
}

pub fn read_checkpoint(path: &Path) -> Result<Checkpoint> {
    let text = std::fs::read_to_string(path).map_err(|e| in_file(path, e))?;
    let env: Envelope = serde_json::from_str(&text).map_err(|e| in_file(path, e))?;
    if env.format != "dancegen-checkpoint" {
        return Err(in_file(path, "not a checkpoint file"));
    }
    if env.version != CHECKPOINT_FORMAT_VERSION {
        return Err(ToolError::Data(format!(
            "unsupported checkpoint version {}, expected {CHECKPOINT_FORMAT_VERSION}",
            env.version
        )));
    }
    if !(1..=2).contains(&env.stage) {
        return Err(in_file(path, format!("invalid stage {}", env.stage)));
    }
    let bytes = B64.decode(env.params).map_err(|e| in_file(path, e))?;
    let store = ParamStore::from_bytes(&bytes)?;
    Ok(Checkpoint { stage: env.stage, size: env.size, step: env.step, store })
}
