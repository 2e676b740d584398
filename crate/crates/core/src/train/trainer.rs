use std::path::{Path, PathBuf};

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::adam::{adam_step, AdamState};
use super::checkpoint::Checkpoint;
use crate::error::{Error, Result};
use crate::nn::{cross_entropy, forward, loss_and_grad, Batch, ModelConfig, Parameters};
use crate::wordpiece::WordPieceModel;

/// Optimization settings. Defaults follow the reference schedule: Adam at a
/// constant rate of 1e-5, batches of 8, no weight decay.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub learning_rate: f64,
    pub batch_size: usize,
    pub epochs: usize,
    /// Validation loss is computed every `eval_every` epochs and after the
    /// last one.
    pub eval_every: usize,
    pub seed: u64,
    /// Decoupled weight decay coefficient; 0 disables it.
    pub weight_decay: f64,
    /// Stop after this many evaluations without improvement. `None` trains
    /// the configured number of epochs.
    pub patience: Option<usize>,
    /// Save `epoch_<n>.ckpt` every `save_every` epochs; 0 disables.
    pub save_every: usize,
    /// Additional epochs whose checkpoints are kept.
    pub save_epochs: Vec<usize>,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            learning_rate: 1e-5,
            batch_size: 8,
            epochs: 50,
            eval_every: 1,
            seed: 0,
            weight_decay: 0.0,
            patience: None,
            save_every: 0,
            save_epochs: Vec::new(),
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return Err(Error::Config(format!("learning_rate must be positive, got {}", self.learning_rate)));
        }
        if self.batch_size == 0 || self.eval_every == 0 {
            return Err(Error::Config("batch_size and eval_every must be positive".into()));
        }
        if !(self.weight_decay >= 0.0 && self.weight_decay.is_finite()) {
            return Err(Error::Config(format!("weight_decay must be nonnegative, got {}", self.weight_decay)));
        }
        if self.patience == Some(0) {
            return Err(Error::Config("patience must be positive when set".into()));
        }
        Ok(())
    }
}

/// A tokenized training pair. The source carries no boundary tokens; the
/// target gets `<sos>`/`<eos>` when batched.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct EncodedPair {
    pub src: Vec<usize>,
    pub tgt: Vec<usize>,
}

/// Tokenizes `(source, target)` texts, truncating to fit `max_len`. Pairs
/// with an empty source are dropped with a warning.
pub fn encode_pairs<S: AsRef<str>, U: AsRef<str>>(
    tokenizer: &WordPieceModel,
    pairs: &[(S, U)],
    max_len: usize,
) -> Vec<EncodedPair> {
    let mut dropped = 0;
    let out: Vec<EncodedPair> = pairs
        .iter()
        .filter_map(|(s, t)| {
            let mut src = tokenizer.encode(s.as_ref(), false);
            let mut tgt = tokenizer.encode(t.as_ref(), false);
            src.truncate(max_len);
            tgt.truncate(max_len.saturating_sub(1));
            if src.is_empty() {
                dropped += 1;
                return None;
            }
            Some(EncodedPair { src, tgt })
        })
        .collect();
    if dropped > 0 {
        log::warn!("dropped {dropped} pairs with an empty source");
    }
    out
}

fn to_batch(data: &[EncodedPair], idx: &[usize]) -> Result<Batch> {
    let src: Vec<&[usize]> = idx.iter().map(|&i| data[i].src.as_slice()).collect();
    let tgt: Vec<&[usize]> = idx.iter().map(|&i| data[i].tgt.as_slice()).collect();
    Batch::new(&src, &tgt)
}

/// Shuffled batches of similar source length: the shuffled order is cut
/// into windows of 16 batches, each window is sorted by length and split,
/// and the resulting batches are shuffled again.
fn epoch_batches(data: &[EncodedPair], batch_size: usize, rng: &mut ChaCha8Rng) -> Vec<Vec<usize>> {
    let mut idx: Vec<usize> = (0..data.len()).collect();
    idx.shuffle(rng);
    let mut batches = Vec::new();
    for window in idx.chunks(batch_size * 16) {
        let mut w = window.to_vec();
        w.sort_by_key(|&i| (data[i].src.len(), data[i].tgt.len()));
        batches.extend(w.chunks(batch_size).map(<[usize]>::to_vec));
    }
    batches.shuffle(rng);
    batches
}

/// Token-weighted mean cross-entropy without dropout.
pub fn evaluate_loss(
    model: &ModelConfig,
    params: &Parameters<f32>,
    data: &[EncodedPair],
    batch_size: usize,
) -> Result<f64> {
    if data.is_empty() {
        return Err(Error::InsufficientData("cannot evaluate on an empty set".into()));
    }
    let mut idx: Vec<usize> = (0..data.len()).collect();
    idx.sort_by_key(|&i| (data[i].src.len(), data[i].tgt.len()));
    let chunks: Vec<&[usize]> = idx.chunks(batch_size.max(1)).collect();
    let parts = chunks
        .par_iter()
        .map(|c| -> Result<(f64, usize)> {
            let batch = to_batch(data, c)?;
            let (logits, _) = forward(model, params, &batch, None)?;
            let (loss, _) = cross_entropy(&logits, &batch)?;
            let n = batch.target_tokens();
            Ok((loss as f64 * n as f64, n))
        })
        .collect::<Result<Vec<_>>>()?;
    let (sum, n) = parts.iter().fold((0.0, 0), |(s, k), &(l, m)| (s + l, k + m));
    Ok(sum / n as f64)
}

/// Owns the full optimization state of one run.
#[derive(Debug, Clone)]
pub struct Trainer {
    pub model: ModelConfig,
    pub config: TrainConfig,
    pub params: Parameters<f32>,
    pub adam: AdamState<f32>,
    /// Drives shuffling and dropout.
    pub rng: ChaCha8Rng,
    /// Completed epochs.
    pub epoch: usize,
    pub best_val_loss: f64,
}

/// The stream of the training RNG; parameter initialization uses stream 0 of
/// the same seed.
const TRAIN_STREAM: u64 = 1;

pub(crate) fn train_rng(seed: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(TRAIN_STREAM);
    rng
}

impl Trainer {
    /// Fresh parameters initialized from `config.seed`.
    pub fn new(model: ModelConfig, config: TrainConfig) -> Result<Self> {
        config.validate()?;
        let params = Parameters::init(&model, config.seed)?;
        Ok(Trainer {
            adam: AdamState::new(&params),
            params,
            rng: train_rng(config.seed),
            model,
            config,
            epoch: 0,
            best_val_loss: f64::INFINITY,
        })
    }

    /// Continues exactly where `ckpt` left off.
    pub fn resume(ckpt: Checkpoint, config: TrainConfig) -> Result<Self> {
        config.validate()?;
        Ok(Trainer {
            model: ckpt.model,
            config,
            params: ckpt.params,
            adam: ckpt.adam,
            rng: ckpt.rng,
            epoch: ckpt.epoch,
            best_val_loss: ckpt.best_val_loss,
        })
    }

    pub fn checkpoint(&self) -> Checkpoint {
        Checkpoint {
            model: self.model,
            params: self.params.clone(),
            adam: self.adam.clone(),
            epoch: self.epoch,
            rng: self.rng.clone(),
            best_val_loss: self.best_val_loss,
        }
    }

    /// One optimizer update on `batch`; returns the batch loss.
    pub fn step(&mut self, batch: &Batch) -> Result<f64> {
        let (loss, grads) = loss_and_grad(&self.model, &self.params, batch, Some(&mut self.rng))?;
        if !loss.is_finite() {
            return Err(Error::InvalidInput(format!("non-finite training loss at step {}", self.adam.step + 1)));
        }
        adam_step(
            &mut self.params,
            &grads,
            &mut self.adam,
            self.config.learning_rate,
            self.config.weight_decay,
        )?;
        Ok(loss as f64)
    }

    /// One pass over `data`; returns the token-weighted mean training loss.
    pub fn train_epoch(&mut self, data: &[EncodedPair]) -> Result<f64> {
        if data.is_empty() {
            return Err(Error::InsufficientData("training set is empty".into()));
        }
        let mut sum = 0.0;
        let mut tokens = 0;
        for idx in epoch_batches(data, self.config.batch_size, &mut self.rng) {
            let batch = to_batch(data, &idx)?;
            let n = batch.target_tokens();
            sum += self.step(&batch)? * n as f64;
            tokens += n;
        }
        self.epoch += 1;
        Ok(sum / tokens as f64)
    }

    pub fn evaluate(&self, data: &[EncodedPair]) -> Result<f64> {
        evaluate_loss(&self.model, &self.params, data, self.config.batch_size)
    }
}

/// One row of `losscurve.csv`. Epoch 0 is the state before training, with
/// the training loss measured like the validation loss (no dropout).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LossPoint {
    pub epoch: usize,
    pub train_loss: f64,
    pub valid_loss: Option<f64>,
}

pub fn loss_curve_csv(curve: &[LossPoint]) -> String {
    let mut out = String::from("epoch,train_loss,valid_loss\n");
    for p in curve {
        let valid = p.valid_loss.map(|v| format!("{v:.6}")).unwrap_or_default();
        out.push_str(&format!("{},{:.6},{}\n", p.epoch, p.train_loss, valid));
    }
    out
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub curve: Vec<LossPoint>,
    pub best_epoch: usize,
    pub best_val_loss: f64,
    pub best_params: Parameters<f32>,
    /// Checkpoints written, by epoch. `best.ckpt` and `last.ckpt` are not
    /// listed.
    pub saved: Vec<(usize, PathBuf)>,
    pub trainer: Trainer,
}

/// Path of the checkpoint kept for `epoch`.
pub fn epoch_checkpoint(dir: &Path, epoch: usize) -> PathBuf {
    dir.join(format!("epoch_{epoch}.ckpt"))
}

/// Trains until `trainer.config.epochs` epochs are complete, keeping the
/// parameters with the lowest validation loss.
///
/// With `out_dir` set, writes `best.ckpt`, `last.ckpt`, the scheduled
/// `epoch_<n>.ckpt` files and `losscurve.csv` there. A fresh run with
/// `save_every > 0` also keeps `epoch_0.ckpt`.
pub fn run_training(
    mut trainer: Trainer,
    train: &[EncodedPair],
    valid: &[EncodedPair],
    out_dir: Option<&Path>,
) -> Result<TrainOutcome> {
    if train.is_empty() || valid.is_empty() {
        return Err(Error::InsufficientData(format!(
            "training needs nonempty splits, got {} train and {} valid pairs",
            train.len(),
            valid.len()
        )));
    }
    let cfg = trainer.config.clone();
    let mut curve = Vec::new();
    let mut best_epoch = trainer.epoch;
    let mut best_params = trainer.params.clone();
    let mut saved = Vec::new();
    let mut stale = 0;

    let record_best = |t: &mut Trainer, valid_loss: f64, best_epoch: &mut usize, best_params: &mut Parameters<f32>| -> Result<bool> {
        if valid_loss < t.best_val_loss {
            t.best_val_loss = valid_loss;
            *best_epoch = t.epoch;
            *best_params = t.params.clone();
            if let Some(dir) = out_dir {
                t.checkpoint().save(&dir.join("best.ckpt"))?;
            }
            return Ok(true);
        }
        Ok(false)
    };

    if trainer.epoch == 0 {
        let valid_loss = trainer.evaluate(valid)?;
        curve.push(LossPoint {
            epoch: 0,
            train_loss: trainer.evaluate(train)?,
            valid_loss: Some(valid_loss),
        });
        record_best(&mut trainer, valid_loss, &mut best_epoch, &mut best_params)?;
        if let (Some(dir), true) = (out_dir, cfg.save_every > 0) {
            let path = epoch_checkpoint(dir, 0);
            trainer.checkpoint().save(&path)?;
            saved.push((0, path));
        }
    }

    while trainer.epoch < cfg.epochs {
        let train_loss = trainer.train_epoch(train)?;
        let e = trainer.epoch;
        let mut point = LossPoint {
            epoch: e,
            train_loss,
            valid_loss: None,
        };
        if e % cfg.eval_every == 0 || e == cfg.epochs {
            let valid_loss = trainer.evaluate(valid)?;
            point.valid_loss = Some(valid_loss);
            if record_best(&mut trainer, valid_loss, &mut best_epoch, &mut best_params)? {
                stale = 0;
            } else {
                stale += 1;
            }
        }
        log::info!(
            "epoch {e}: train {:.4}{}",
            train_loss,
            point.valid_loss.map(|v| format!(" valid {v:.4}")).unwrap_or_default()
        );
        curve.push(point);
        if let Some(dir) = out_dir {
            if (cfg.save_every > 0 && e % cfg.save_every == 0) || cfg.save_epochs.contains(&e) {
                let path = epoch_checkpoint(dir, e);
                trainer.checkpoint().save(&path)?;
                saved.push((e, path));
            }
        }
        if cfg.patience.is_some_and(|p| stale >= p) {
            log::info!("no validation improvement for {stale} evaluations; stopping");
            break;
        }
    }

    if let Some(dir) = out_dir {
        trainer.checkpoint().save(&dir.join("last.ckpt"))?;
        let path = dir.join("losscurve.csv");
        std::fs::write(&path, loss_curve_csv(&curve)).map_err(|e| Error::io(&path, e))?;
    }
    Ok(TrainOutcome {
        curve,
        best_epoch,
        best_val_loss: trainer.best_val_loss,
        best_params,
        saved,
        trainer,
    })
}
