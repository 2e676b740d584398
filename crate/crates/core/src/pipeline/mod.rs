//! Configuration, the end-to-end run, and human-evaluation batches.

pub mod annotation;
mod config;
mod run;

pub use config::{
    AlignSection, IngestSection, PipelineConfig, PretrainSection, ScorerKind, TokenizerSection, TrainSection,
    SEED_ENV,
};
pub use run::{
    align, bleu_csv, harvest, hash_git_dir, load_model, load_parallel, pair_texts, refilter_pairs, run_pipeline,
    sha256_file, sha256_hex, snapshot_epochs, split_of, tokenizer_corpus, BleuRow, Generation, Manifest,
    StageRecord, MANIFEST_FILE, STAGES,
};
