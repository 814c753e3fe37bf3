//! Training configuration files (JSON). A fully populated default lives at
//! `configs/train-default.json`; every field here mirrors one knob of the
//! core trainer.

use std::path::Path;

use serde::{Deserialize, Serialize};

use dancegen_core::nn::adam::LrSchedule;
use dancegen_core::pipeline::TrainConfig;

use crate::checkpoint::SizeTag;
use crate::error::{in_file, Result};

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrainSettings {
    pub size: SizeTag,
    pub batch_size: usize,
    pub total_steps: u64,
    pub l2_weight: f64,
    pub adversarial_weight: f64,
    pub seed: u64,
    pub learning_rate: f64,
    /// `(step, lr)` drops applied once the step counter passes each
    /// threshold, ascending.
    pub lr_drops: Vec<(u64, f64)>,
    pub discriminator_hidden: usize,
    /// Emit one metrics line every this many steps (and always the last).
    pub log_every: u64,
}

impl Default for TrainSettings {
    fn default() -> TrainSettings {
        TrainSettings {
            size: SizeTag::Full,
            batch_size: 8,
            total_steps: 300_000,
            l2_weight: 10.0,
            adversarial_weight: 1.0,
            seed: 0,
            learning_rate: 2e-4,
            lr_drops: vec![(100_000, 2e-5), (200_000, 2e-6)],
            discriminator_hidden: 256,
            log_every: 100,
        }
    }
}

impl TrainSettings {
    pub fn load(path: &Path) -> Result<TrainSettings> {
        let text = std::fs::read_to_string(path).map_err(|e| in_file(path, e))?;
        serde_json::from_str(&text).map_err(|e| in_file(path, e))
    }

    pub fn to_train_config(&self) -> TrainConfig {
        TrainConfig {
            batch_size: self.batch_size,
            total_steps: self.total_steps,
            l2_weight: self.l2_weight,
            adversarial_weight: self.adversarial_weight,
            seed: self.seed,
            schedule: LrSchedule { base: self.learning_rate, drops: self.lr_drops.clone() },
        }
    }
}
