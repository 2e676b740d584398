use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Transformer hyperparameters. Defaults are the full-size vanilla model;
/// [`ModelConfig::desk`] is the scaled-down configuration used on a CPU.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ModelConfig {
    pub vocab_size: usize,
    pub d_model: usize,
    pub heads: usize,
    pub encoder_layers: usize,
    pub decoder_layers: usize,
    pub d_ff: usize,
    pub dropout: f64,
    pub max_len: usize,
}

impl Default for ModelConfig {
    fn default() -> Self {
        ModelConfig {
            vocab_size: 40_000,
            d_model: 512,
            heads: 8,
            encoder_layers: 6,
            decoder_layers: 6,
            d_ff: 2048,
            dropout: 0.1,
            max_len: 256,
        }
    }
}

impl ModelConfig {
    pub fn desk(vocab_size: usize) -> Self {
        ModelConfig {
            vocab_size,
            d_model: 64,
            heads: 4,
            encoder_layers: 2,
            decoder_layers: 2,
            d_ff: 256,
            dropout: 0.1,
            max_len: 128,
        }
    }

    pub fn head_dim(&self) -> usize {
        self.d_model / self.heads
    }

    pub fn validate(&self) -> Result<()> {
        let fail = |m: String| Err(Error::Config(m));
        if self.heads == 0 || self.d_model == 0 || self.d_model % self.heads != 0 {
            return fail(format!(
                "d_model ({}) must be a positive multiple of heads ({})",
                self.d_model, self.heads
            ));
        }
        if self.encoder_layers == 0 || self.decoder_layers == 0 {
            return fail("encoder and decoder need at least one layer each".into());
        }
        if self.vocab_size == 0 || self.d_ff == 0 || self.max_len == 0 {
            return fail("vocab_size, d_ff and max_len must be positive".into());
        }
        if !(0.0..1.0).contains(&self.dropout) {
            return fail(format!("dropout must lie in [0, 1), got {}", self.dropout));
        }
        Ok(())
    }
}
