use serde::{Deserialize, Serialize};

use super::optimizer::OptimizerKind;
use super::{Result, TrainError};

/// Optimization schedule: optimizer, per-epoch linear learning-rate
/// decay, and early stopping on validation loss.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrainSchedule {
    pub max_epochs: usize,
    pub batch_size: usize,
    pub optimizer: OptimizerKind,
    pub lr_start: f64,
    pub lr_end: f64,
    pub weight_decay: f64,
    pub early_stop_patience: usize,
    pub seed: u64,
}

impl TrainSchedule {
    /// Learning rate at `epoch` (0-based): linear interpolation from
    /// `lr_start` at epoch 0 to `lr_end` at the final epoch.
    pub fn lr_at(&self, epoch: usize) -> f64 {
        if self.max_epochs <= 1 {
            return self.lr_start;
        }
        let t = epoch as f64 / (self.max_epochs - 1) as f64;
        self.lr_start + (self.lr_end - self.lr_start) * t
    }

    pub fn validate(&self) -> Result<()> {
        if self.max_epochs == 0 || self.batch_size == 0 {
            return Err(TrainError::InvalidSchedule(
                "max_epochs and batch_size must be positive".to_string(),
            ));
        }
        if self.lr_end > self.lr_start {
            return Err(TrainError::InvalidSchedule(format!(
                "lr_end {} exceeds lr_start {}",
                self.lr_end, self.lr_start
            )));
        }
        Ok(())
    }

    /// Named presets for the experiment families. A patience equal to
    /// `max_epochs` disables early stopping.
    pub fn preset(name: &str) -> Option<TrainSchedule> {
        let s = match name {
            "cnn-anglish" => TrainSchedule {
                max_epochs: 200,
                batch_size: 8,
                optimizer: OptimizerKind::Adam,
                lr_start: 1e-3,
                lr_end: 1e-4,
                weight_decay: 1e-4,
                early_stop_patience: 10,
                seed: 0,
            },
            "resnet-anglish" | "cnn-private" | "resnet-private" => TrainSchedule {
                max_epochs: 100,
                batch_size: 16,
                optimizer: OptimizerKind::Adam,
                lr_start: 1e-3,
                lr_end: 1e-4,
                weight_decay: 1e-4,
                early_stop_patience: 10,
                seed: 0,
            },
            // classifier lr 1e-4 with the encoder group mapped to 1e-5
            "speech-encoder-anglish" => TrainSchedule {
                max_epochs: 5,
                batch_size: 16,
                optimizer: OptimizerKind::Adam,
                lr_start: 1e-4,
                lr_end: 1e-4,
                weight_decay: 1e-4,
                early_stop_patience: 5,
                seed: 0,
            },
            "speech-encoder-private" => TrainSchedule {
                max_epochs: 20,
                batch_size: 4,
                optimizer: OptimizerKind::AdamW,
                lr_start: 1e-5,
                lr_end: 1e-5,
                weight_decay: 1e-4,
                early_stop_patience: 20,
                seed: 0,
            },
            "mlp-efcamdat" => TrainSchedule {
                max_epochs: 300,
                batch_size: 32,
                optimizer: OptimizerKind::Adam,
                lr_start: 1e-5,
                lr_end: 1e-5,
                weight_decay: 0.0,
                early_stop_patience: 10,
                seed: 0,
            },
            "finetune-text-efcamdat" => TrainSchedule {
                max_epochs: 30,
                batch_size: 32,
                optimizer: OptimizerKind::Adam,
                lr_start: 1e-5,
                lr_end: 1e-5,
                weight_decay: 0.0,
                early_stop_patience: 2,
                seed: 0,
            },
            "bilstm-private" => TrainSchedule {
                max_epochs: 120,
                batch_size: 16,
                optimizer: OptimizerKind::Adam,
                lr_start: 1e-3,
                lr_end: 1e-3,
                weight_decay: 0.01,
                early_stop_patience: 120,
                seed: 0,
            },
            _ => return None,
        };
        Some(s)
    }

    pub fn preset_names() -> &'static [&'static str] {
        &[
            "cnn-anglish",
            "resnet-anglish",
            "speech-encoder-anglish",
            "cnn-private",
            "resnet-private",
            "speech-encoder-private",
            "mlp-efcamdat",
            "finetune-text-efcamdat",
            "bilstm-private",
        ]
    }
}
