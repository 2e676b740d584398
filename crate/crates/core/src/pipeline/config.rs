use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::align::AlignConfig;
use crate::corpus::{KeywordSet, RepoFilters};
use crate::error::{Error, Result};
use crate::nn::ModelConfig;
use crate::train::{TrainConfig, TransferEpochs, TransferScheme};

/// Environment variable overriding [`PipelineConfig::seed`].
pub const SEED_ENV: &str = "RS_SEED";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct IngestSection {
    /// Directory of cloned repositories.
    pub git_dir: Option<PathBuf>,
    /// Existing `document_pairs.jsonl` to use instead of scanning git.
    pub pairs: Option<PathBuf>,
    pub min_stars: u64,
    pub min_commits: u64,
    /// One keyword per line; the built-in list when absent.
    pub keywords_path: Option<PathBuf>,
}

impl Default for IngestSection {
    fn default() -> Self {
        let f = RepoFilters::default();
        IngestSection {
            git_dir: None,
            pairs: None,
            min_stars: f.min_stars,
            min_commits: f.min_commits,
            keywords_path: None,
        }
    }
}

impl IngestSection {
    pub fn filters(&self) -> RepoFilters {
        RepoFilters {
            min_stars: self.min_stars,
            min_commits: self.min_commits,
        }
    }

    pub fn keywords(&self) -> Result<KeywordSet> {
        match &self.keywords_path {
            Some(p) => KeywordSet::from_file(p),
            None => Ok(KeywordSet::default()),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ScorerKind {
    Tfidf,
    File,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AlignSection {
    pub window: usize,
    pub tfidf_threshold: f64,
    pub bleu_lo: f64,
    pub bleu_hi: f64,
    pub scorer: ScorerKind,
    /// `scores.tsv` for the file scorer.
    pub score_file: Option<PathBuf>,
    pub valid_fraction: f64,
    pub test_fraction: f64,
}

impl Default for AlignSection {
    fn default() -> Self {
        let a = AlignConfig::default();
        AlignSection {
            window: a.window,
            tfidf_threshold: a.tfidf_threshold,
            bleu_lo: a.bleu_lo,
            bleu_hi: a.bleu_hi,
            scorer: ScorerKind::Tfidf,
            score_file: None,
            valid_fraction: 0.1,
            test_fraction: 0.1,
        }
    }
}

impl AlignSection {
    pub fn align_config(&self) -> AlignConfig {
        AlignConfig {
            window: self.window,
            tfidf_threshold: self.tfidf_threshold,
            bleu_lo: self.bleu_lo,
            bleu_hi: self.bleu_hi,
        }
    }

    /// Valid and test sizes for `n` pairs; each gets at least one pair.
    pub fn split_sizes(&self, n: usize) -> Result<(usize, usize, usize)> {
        if n < 3 {
            return Err(Error::InsufficientData(format!(
                "need at least 3 aligned pairs to form train/valid/test splits, got {n}"
            )));
        }
        let valid = ((n as f64 * self.valid_fraction).round() as usize).max(1);
        let test = ((n as f64 * self.test_fraction).round() as usize).max(1);
        if valid + test >= n {
            return Err(Error::InsufficientData(format!("{n} pairs leave no training data")));
        }
        Ok((n - valid - test, valid, test))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TokenizerSection {
    pub vocab_size: usize,
}

impl Default for TokenizerSection {
    fn default() -> Self {
        TokenizerSection { vocab_size: 40_000 }
    }
}

/// Pretraining on a larger related parallel corpus, the starting point of
/// the checkpoint transfer schemes.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PretrainSection {
    /// `aligned_pairs.jsonl`-format corpus. Pairs with split `unassigned`
    /// are split with the align section's fractions.
    pub pairs: Option<PathBuf>,
    pub epochs: usize,
    pub early_epoch: usize,
    pub mid_epoch: usize,
}

impl Default for PretrainSection {
    fn default() -> Self {
        let t = TransferEpochs::default();
        PretrainSection {
            pairs: None,
            epochs: 40,
            early_epoch: t.early,
            mid_epoch: t.mid,
        }
    }
}

impl PretrainSection {
    pub fn transfer_epochs(&self) -> TransferEpochs {
        TransferEpochs {
            early: self.early_epoch,
            mid: self.mid_epoch,
        }
    }
}

/// Training on the README corpus, one run per transfer scheme.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainSection {
    pub learning_rate: f64,
    pub batch_size: usize,
    pub epochs: usize,
    pub eval_every: usize,
    pub weight_decay: f64,
    pub patience: Option<usize>,
    /// Snapshot cadence; BLEU is reported for every snapshot.
    pub snapshot_every: usize,
    pub transfer_schemes: Vec<TransferScheme>,
    pub reset_optimizer: bool,
    pub beam_size: usize,
    pub max_output_len: usize,
}

impl Default for TrainSection {
    fn default() -> Self {
        let t = TrainConfig::default();
        TrainSection {
            learning_rate: t.learning_rate,
            batch_size: t.batch_size,
            epochs: 24,
            eval_every: t.eval_every,
            weight_decay: t.weight_decay,
            patience: t.patience,
            snapshot_every: 4,
            transfer_schemes: TransferScheme::ALL.to_vec(),
            reset_optimizer: false,
            beam_size: 5,
            max_output_len: 64,
        }
    }
}

impl TrainSection {
    pub fn train_config(&self, seed: u64) -> TrainConfig {
        TrainConfig {
            learning_rate: self.learning_rate,
            batch_size: self.batch_size,
            epochs: self.epochs,
            eval_every: self.eval_every,
            seed,
            weight_decay: self.weight_decay,
            patience: self.patience,
            save_every: self.snapshot_every,
            save_epochs: Vec::new(),
        }
    }
}

/// Whole-pipeline configuration, read from TOML. Every value defaults to the
/// reference setting, so an empty file is a valid configuration.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PipelineConfig {
    pub seed: u64,
    pub ingest: IngestSection,
    pub align: AlignSection,
    pub tokenizer: TokenizerSection,
    /// `vocab_size` is replaced by the trained tokenizer's size.
    pub model: ModelConfig,
    pub pretrain: PretrainSection,
    pub train: TrainSection,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        PipelineConfig {
            seed: 0,
            ingest: IngestSection::default(),
            align: AlignSection::default(),
            tokenizer: TokenizerSection::default(),
            model: ModelConfig::default(),
            pretrain: PretrainSection::default(),
            train: TrainSection::default(),
        }
    }
}

impl PipelineConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::Config(e.to_string()))
    }

    /// Reads and validates a configuration file, applying [`SEED_ENV`].
    /// Relative input paths are resolved against the file's directory.
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let mut cfg = Self::from_toml(&text)?;
        let base = path.parent().unwrap_or(Path::new(""));
        for p in [
            &mut cfg.ingest.git_dir,
            &mut cfg.ingest.pairs,
            &mut cfg.ingest.keywords_path,
            &mut cfg.align.score_file,
            &mut cfg.pretrain.pairs,
        ]
        .into_iter()
        .flatten()
        {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        }
        cfg.apply_seed_env()?;
        cfg.validate()?;
        Ok(cfg)
    }

    /// Input checks needed only by a full run: checkpoint transfer schemes
    /// need a pretraining corpus.
    pub fn validate_run_inputs(&self) -> Result<()> {
        self.validate()?;
        let needs_pretrain = self
            .train
            .transfer_schemes
            .iter()
            .any(|s| *s != TransferScheme::FromScratch);
        if needs_pretrain && self.pretrain.pairs.is_none() {
            return Err(Error::Config(
                "checkpoint transfer schemes need pretrain.pairs; list only \"from_scratch\" otherwise".into(),
            ));
        }
        if self.ingest.git_dir.is_none() == self.ingest.pairs.is_none() {
            return Err(Error::Config("set exactly one of ingest.git_dir and ingest.pairs".into()));
        }
        Ok(())
    }

    pub fn apply_seed_env(&mut self) -> Result<()> {
        if let Ok(v) = std::env::var(SEED_ENV) {
            self.seed = v
                .trim()
                .parse()
                .map_err(|_| Error::Config(format!("{SEED_ENV} must be an unsigned integer, got {v:?}")))?;
        }
        Ok(())
    }

    /// Checks every section against the preconditions of the stage that
    /// consumes it.
    pub fn validate(&self) -> Result<()> {
        self.align.align_config().validate()?;
        let frac = |x: f64| (0.0..1.0).contains(&x);
        if !frac(self.align.valid_fraction)
            || !frac(self.align.test_fraction)
            || self.align.valid_fraction + self.align.test_fraction >= 1.0
        {
            return Err(Error::Config("align.valid_fraction + align.test_fraction must lie below 1".into()));
        }
        if self.align.scorer == ScorerKind::File && self.align.score_file.is_none() {
            return Err(Error::Config("align.scorer = \"file\" requires align.score_file".into()));
        }
        if self.tokenizer.vocab_size <= crate::wordpiece::SPECIALS.len() {
            return Err(Error::Config(format!(
                "tokenizer.vocab_size must exceed the {} special tokens",
                crate::wordpiece::SPECIALS.len()
            )));
        }
        ModelConfig {
            vocab_size: self.tokenizer.vocab_size,
            ..self.model
        }
        .validate()?;
        self.train.train_config(self.seed).validate()?;
        if self.train.beam_size == 0 || self.train.max_output_len == 0 {
            return Err(Error::Config("train.beam_size and train.max_output_len must be positive".into()));
        }
        if self.train.transfer_schemes.is_empty() {
            return Err(Error::Config("train.transfer_schemes is empty".into()));
        }
        let needs_pretrain = self
            .train
            .transfer_schemes
            .iter()
            .any(|s| *s != TransferScheme::FromScratch);
        if needs_pretrain {
            let p = &self.pretrain;
            if !(1..=p.epochs).contains(&p.early_epoch) || !(1..=p.epochs).contains(&p.mid_epoch) {
                return Err(Error::Config(format!(
                    "pretrain.early_epoch ({}) and pretrain.mid_epoch ({}) must lie in 1..={}",
                    p.early_epoch, p.mid_epoch, p.epochs
                )));
            }
        }
        Ok(())
    }
}
