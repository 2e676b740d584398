use std::fmt;
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use super::adam::AdamState;
use super::checkpoint::Checkpoint;
use super::trainer::{epoch_checkpoint, run_training, train_rng, EncodedPair, TrainConfig, TrainOutcome, Trainer};
use crate::error::{Error, Result};
use crate::nn::ModelConfig;

/// Where fine-tuning starts from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TransferScheme {
    FromScratch,
    CheckpointEarly,
    CheckpointMid,
    CheckpointBest,
}

impl TransferScheme {
    pub const ALL: [TransferScheme; 4] = [
        TransferScheme::FromScratch,
        TransferScheme::CheckpointEarly,
        TransferScheme::CheckpointMid,
        TransferScheme::CheckpointBest,
    ];

    pub fn name(self) -> &'static str {
        match self {
            TransferScheme::FromScratch => "from_scratch",
            TransferScheme::CheckpointEarly => "checkpoint_early",
            TransferScheme::CheckpointMid => "checkpoint_mid",
            TransferScheme::CheckpointBest => "checkpoint_best",
        }
    }

    /// Pretraining checkpoint this scheme starts from, inside the pretraining
    /// output directory.
    pub fn source(self, pretrain_dir: &Path, epochs: TransferEpochs) -> Option<std::path::PathBuf> {
        match self {
            TransferScheme::FromScratch => None,
            TransferScheme::CheckpointEarly => Some(epoch_checkpoint(pretrain_dir, epochs.early)),
            TransferScheme::CheckpointMid => Some(epoch_checkpoint(pretrain_dir, epochs.mid)),
            TransferScheme::CheckpointBest => Some(pretrain_dir.join("best.ckpt")),
        }
    }
}

impl fmt::Display for TransferScheme {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.pad(self.name())
    }
}

impl FromStr for TransferScheme {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Self::ALL
            .into_iter()
            .find(|t| t.name() == s.replace('-', "_"))
            .ok_or_else(|| Error::Config(format!("unknown transfer scheme {s:?}")))
    }
}

/// Pretraining epochs whose checkpoints serve as the early and mid starting
/// points.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct TransferEpochs {
    pub early: usize,
    pub mid: usize,
}

impl Default for TransferEpochs {
    fn default() -> Self {
        TransferEpochs { early: 3, mid: 12 }
    }
}

/// Fine-tunes from `base`, or from fresh parameters when `base` is `None`.
///
/// Parameters and Adam moments (including the step count) carry over from
/// the base unless `reset_optimizer` is set. Shuffling restarts from
/// `config.seed`, so every scheme sees the same batch order.
pub fn finetune(
    base: Option<Checkpoint>,
    fresh: ModelConfig,
    vocab_size: usize,
    config: TrainConfig,
    reset_optimizer: bool,
    train: &[EncodedPair],
    valid: &[EncodedPair],
    out_dir: Option<&Path>,
) -> Result<TrainOutcome> {
    let trainer = match base {
        None => {
            if fresh.vocab_size != vocab_size {
                return Err(Error::Config(format!(
                    "model vocabulary {} does not match tokenizer vocabulary {vocab_size}",
                    fresh.vocab_size
                )));
            }
            Trainer::new(fresh, config)?
        }
        Some(ckpt) => {
            if ckpt.model.vocab_size != vocab_size {
                return Err(Error::Config(format!(
                    "checkpoint vocabulary {} does not match tokenizer vocabulary {vocab_size}",
                    ckpt.model.vocab_size
                )));
            }
            let adam = if reset_optimizer {
                AdamState::new(&ckpt.params)
            } else {
                ckpt.adam
            };
            config.validate()?;
            Trainer {
                model: ckpt.model,
                rng: train_rng(config.seed),
                config,
                params: ckpt.params,
                adam,
                epoch: 0,
                best_val_loss: f64::INFINITY,
            }
        }
    };
    run_training(trainer, train, valid, out_dir)
}
