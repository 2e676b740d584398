//! TF-IDF, BLEU, corpus statistics and annotation statistics.

mod bleu;
mod krippendorff;
mod stats;
mod tfidf;
mod wilcoxon;

pub use bleu::{bleu_tokens, corpus_bleu, sentence_bleu, BleuWeights, CorpusBleu};
pub use krippendorff::{krippendorff_alpha, DifferenceMetric, RatingTable};
pub use stats::{corpus_stats, CorpusStats, StatRow};
pub use tfidf::{cosine_distance, SparseVector, TfidfModel};
pub use wilcoxon::{average_ranks, wilcoxon_signed_rank, WilcoxonResult, EXACT_MAX_N};
