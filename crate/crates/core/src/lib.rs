//! Build a README simplification corpus from commit histories and train a
//! compact encoder-decoder Transformer on it.
//!
//! The crate is organized along the pipeline:
//!
//! - [`corpus`]: harvest regular/simple README pairs from git histories.
//! - [`mask`]: clean READMEs, mask code, tables, paths and URLs, split sentences.
//! - [`metrics`]: TF-IDF, BLEU, corpus statistics, Krippendorff's alpha, Wilcoxon.
//! - [`align`]: sentence alignment and filtering into a parallel corpus.
//! - [`wordpiece`]: subword tokenizer with atomic special tokens.
//! - [`nn`]: tensors and a Transformer with analytic gradients.
//! - [`train`]: Adam, checkpoints, training loops, transfer learning, beam search.
//! - [`pipeline`]: configuration, end-to-end runs and annotation batches.
//! - [`synth`]: synthetic corpora and a git repository fixture.

pub mod align;
pub mod corpus;
pub mod error;
pub mod jsonl;
pub mod mask;
pub mod metrics;
pub mod nn;
pub mod pipeline;
pub mod synth;
pub mod train;
pub mod wordpiece;

pub use error::{Error, Result};
