//! Sentence alignment of regular/simple README pairs into a parallel corpus.
//!
//! Stages, each returning a subset of its input:
//!
//! 1. [`candidate_pairs`]: all sentence pairs within a position window,
//! 2. [`classify_candidates`]: pairs a [`SimilarityScorer`] calls aligned,
//! 3. [`filter_tfidf`]: TF-IDF cosine distance at most a threshold,
//! 4. [`filter_bleu`]: sentence BLEU inside a band (drops copies and
//!    near-disjoint pairs),
//! 5. [`anomaly_filter`]: groups by simple sentence and drops groups with too
//!    many regular sentences or overlong sentences.

mod scorer;
mod sweep;

use std::collections::BTreeMap;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::mask::{alphabetic_word_count, MaskedDocRecord, MaskedSentence, Side};
use crate::metrics::{bleu_tokens, sentence_bleu, BleuWeights, TfidfModel};

pub use scorer::{sentence_hash, FileScorer, SimilarityScorer, TfidfScorer};
pub use sweep::{load_labeled, parse_grid, threshold_sweep, LabeledPair, SweepResult, SweepRow};

/// Most regular sentences one simple sentence may align to.
pub const MAX_MULTIPLICITY: usize = 3;
/// Most alphabetic words any aligned sentence may have.
pub const MAX_ALPHABETIC_WORDS: usize = 40;

#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct AlignmentProblem {
    pub simple: Vec<MaskedSentence>,
    pub regular: Vec<MaskedSentence>,
}

/// Pairs `(simple_idx, regular_idx)` whose document positions differ by at
/// most `window`.
pub fn candidate_pairs(problem: &AlignmentProblem, window: usize) -> Vec<(usize, usize)> {
    let mut out = Vec::new();
    for (i, s) in problem.simple.iter().enumerate() {
        for (j, c) in problem.regular.iter().enumerate() {
            if s.doc_position.abs_diff(c.doc_position) <= window {
                out.push((i, j));
            }
        }
    }
    out
}

/// A candidate pair carrying the scores gathered so far.
#[derive(Debug, Clone, PartialEq)]
pub struct Candidate {
    pub simple_idx: usize,
    pub regular_idx: usize,
    pub simple: String,
    pub regular: String,
    pub score: f64,
    pub tfidf_distance: Option<f64>,
    pub bleu: Option<f64>,
}

/// Scores candidates and keeps those the scorer calls aligned.
pub fn classify_candidates(
    problem: &AlignmentProblem,
    cands: &[(usize, usize)],
    scorer: &dyn SimilarityScorer,
) -> Result<Vec<Candidate>> {
    let mut out = Vec::new();
    for &(i, j) in cands {
        let simple = &problem.simple[i].text;
        let regular = &problem.regular[j].text;
        let score = scorer.score(simple, regular)?;
        if score >= scorer.cutoff() {
            out.push(Candidate {
                simple_idx: i,
                regular_idx: j,
                simple: simple.clone(),
                regular: regular.clone(),
                score,
                tfidf_distance: None,
                bleu: None,
            });
        }
    }
    Ok(out)
}

/// Keeps candidates with TF-IDF cosine distance `<= threshold`.
pub fn filter_tfidf(cands: Vec<Candidate>, model: &TfidfModel, threshold: f64) -> Vec<Candidate> {
    cands
        .into_iter()
        .filter_map(|mut c| {
            let d = model.distance(&c.simple, &c.regular);
            c.tfidf_distance = Some(d);
            (d <= threshold).then_some(c)
        })
        .collect()
}

/// Sentence BLEU of the simple sentence against the regular one.
pub fn pair_bleu(simple: &str, regular: &str) -> f64 {
    sentence_bleu(&bleu_tokens(simple), &bleu_tokens(regular), BleuWeights::default())
}

/// Keeps candidates with `lo <= bleu <= hi`.
pub fn filter_bleu(cands: Vec<Candidate>, lo: f64, hi: f64) -> Vec<Candidate> {
    cands
        .into_iter()
        .filter_map(|mut c| {
            let b = pair_bleu(&c.simple, &c.regular);
            c.bleu = Some(b);
            (lo <= b && b <= hi).then_some(c)
        })
        .collect()
}

/// All regular sentences aligned to one simple sentence of one document pair.
#[derive(Debug, Clone, PartialEq)]
pub struct SimpleGroup {
    pub source: String,
    pub simple: String,
    pub regular: Vec<String>,
    pub tfidf_distances: Vec<f64>,
    pub bleus: Vec<f64>,
}

/// Groups candidates of one document pair by simple-sentence text. Groups
/// follow the first occurrence of their simple sentence; members follow
/// candidate order, and a regular sentence repeated verbatim is kept once.
pub fn group_by_simple(source: &str, cands: &[Candidate]) -> Vec<SimpleGroup> {
    let mut order: Vec<String> = Vec::new();
    let mut groups: BTreeMap<String, SimpleGroup> = BTreeMap::new();
    for c in cands {
        let g = groups.entry(c.simple.clone()).or_insert_with(|| {
            order.push(c.simple.clone());
            SimpleGroup {
                source: source.to_string(),
                simple: c.simple.clone(),
                regular: Vec::new(),
                tfidf_distances: Vec::new(),
                bleus: Vec::new(),
            }
        });
        if g.regular.contains(&c.regular) {
            continue;
        }
        g.regular.push(c.regular.clone());
        g.tfidf_distances.push(c.tfidf_distance.unwrap_or(f64::NAN));
        g.bleus.push(c.bleu.unwrap_or(f64::NAN));
    }
    order.into_iter().map(|s| groups.remove(&s).expect("group exists")).collect()
}

/// Multiplicity statistics used by [`anomaly_filter`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AnomalyStats {
    pub mean: f64,
    pub std_dev: f64,
    /// Largest kept multiplicity from the 3-sigma rule, before the fixed cap.
    pub sigma_cutoff: f64,
}

/// Drops groups whose multiplicity exceeds `mean + 3 sd` (population sd over
/// all groups given), then groups above [`MAX_MULTIPLICITY`], then groups with
/// any sentence over [`MAX_ALPHABETIC_WORDS`] alphabetic words.
pub fn anomaly_filter(groups: Vec<SimpleGroup>) -> (Vec<SimpleGroup>, AnomalyStats) {
    let n = groups.len().max(1) as f64;
    let mean = groups.iter().map(|g| g.regular.len() as f64).sum::<f64>() / n;
    let var = groups
        .iter()
        .map(|g| (g.regular.len() as f64 - mean).powi(2))
        .sum::<f64>()
        / n;
    let stats = AnomalyStats {
        mean,
        std_dev: var.sqrt(),
        sigma_cutoff: mean + 3.0 * var.sqrt(),
    };
    let kept = groups
        .into_iter()
        .filter(|g| g.regular.len() as f64 <= stats.sigma_cutoff)
        .filter(|g| (1..=MAX_MULTIPLICITY).contains(&g.regular.len()))
        .filter(|g| {
            alphabetic_word_count(&g.simple) <= MAX_ALPHABETIC_WORDS
                && g.regular.iter().all(|r| alphabetic_word_count(r) <= MAX_ALPHABETIC_WORDS)
        })
        .collect();
    (kept, stats)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Train,
    Valid,
    Test,
    #[default]
    Unassigned,
}

/// `aligned_pairs.jsonl` record.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AlignedPair {
    pub pair_id: String,
    pub regular: Vec<String>,
    pub simple: String,
    /// Mean over the aligned regular sentences.
    pub tfidf_distance: f64,
    /// Mean over the aligned regular sentences.
    pub bleu: f64,
    #[serde(default)]
    pub split: Split,
}

impl AlignedPair {
    /// The regular side as one source text.
    pub fn regular_text(&self) -> String {
        self.regular.join(" ")
    }
}

fn mean(v: &[f64]) -> f64 {
    v.iter().sum::<f64>() / v.len() as f64
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AlignConfig {
    pub window: usize,
    pub tfidf_threshold: f64,
    pub bleu_lo: f64,
    pub bleu_hi: f64,
}

impl Default for AlignConfig {
    fn default() -> Self {
        AlignConfig {
            window: 50,
            tfidf_threshold: 0.5,
            bleu_lo: 0.1,
            bleu_hi: 0.9,
        }
    }
}

impl AlignConfig {
    pub fn validate(&self) -> Result<()> {
        let unit = |x: f64| (0.0..=1.0).contains(&x);
        if self.window == 0 {
            return Err(Error::Config("align.window must be at least 1".into()));
        }
        if !unit(self.tfidf_threshold) {
            return Err(Error::Config(format!(
                "align.tfidf_threshold must lie in [0, 1], got {}",
                self.tfidf_threshold
            )));
        }
        if !unit(self.bleu_lo) || !unit(self.bleu_hi) || self.bleu_lo > self.bleu_hi {
            return Err(Error::Config(format!(
                "align BLEU band must satisfy 0 <= bleu_lo <= bleu_hi <= 1, got [{}, {}]",
                self.bleu_lo, self.bleu_hi
            )));
        }
        Ok(())
    }
}

/// Sizes after each stage, summed over documents.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct StageCounts {
    pub candidates: usize,
    pub classified: usize,
    pub tfidf: usize,
    pub bleu: usize,
    pub groups: usize,
    pub kept_groups: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct AlignOutput {
    pub pairs: Vec<AlignedPair>,
    pub counts: StageCounts,
    pub anomaly: AnomalyStats,
}

/// Candidate groups of one document pair before the anomaly filter.
pub fn align_problem(
    source: &str,
    problem: &AlignmentProblem,
    config: &AlignConfig,
    scorer: &dyn SimilarityScorer,
    model: &TfidfModel,
    counts: &mut StageCounts,
) -> Result<Vec<SimpleGroup>> {
    let cands = candidate_pairs(problem, config.window);
    counts.candidates += cands.len();
    let classified = classify_candidates(problem, &cands, scorer)?;
    counts.classified += classified.len();
    let tfidf = filter_tfidf(classified, model, config.tfidf_threshold);
    counts.tfidf += tfidf.len();
    let bleu = filter_bleu(tfidf, config.bleu_lo, config.bleu_hi);
    counts.bleu += bleu.len();
    let groups = group_by_simple(source, &bleu);
    counts.groups += groups.len();
    Ok(groups)
}

/// Turns kept groups into aligned pairs with ids `<source>#<k>`, `k`
/// counting within each source.
pub fn groups_to_pairs(groups: Vec<SimpleGroup>) -> Vec<AlignedPair> {
    let mut per_source: BTreeMap<String, usize> = BTreeMap::new();
    groups
        .into_iter()
        .map(|g| {
            let k = per_source.entry(g.source.clone()).or_default();
            let pair_id = format!("{}#{}", g.source, k);
            *k += 1;
            AlignedPair {
                pair_id,
                tfidf_distance: mean(&g.tfidf_distances),
                bleu: mean(&g.bleus),
                regular: g.regular,
                simple: g.simple,
                split: Split::Unassigned,
            }
        })
        .collect()
}

/// Aligns many problems, applying the anomaly statistics over all of them.
pub fn align_problems(
    problems: &[(String, AlignmentProblem)],
    config: &AlignConfig,
    scorer: &dyn SimilarityScorer,
    model: &TfidfModel,
) -> Result<AlignOutput> {
    config.validate()?;
    let mut counts = StageCounts::default();
    let mut groups = Vec::new();
    for (source, problem) in problems {
        groups.extend(align_problem(source, problem, config, scorer, model, &mut counts)?);
    }
    let (kept, anomaly) = anomaly_filter(groups);
    counts.kept_groups = kept.len();
    Ok(AlignOutput {
        pairs: groups_to_pairs(kept),
        counts,
        anomaly,
    })
}

fn sentences(texts: &[String]) -> Vec<MaskedSentence> {
    texts
        .iter()
        .enumerate()
        .map(|(i, t)| MaskedSentence {
            text: t.clone(),
            doc_position: i,
        })
        .collect()
}

/// Pairs up the difficult and simple records of each `(repo_id, sha)`.
/// Records without a counterpart are skipped with a warning.
pub fn problems_from_records(records: &[MaskedDocRecord]) -> Vec<(String, AlignmentProblem)> {
    let mut by_key: BTreeMap<(String, String), (Option<&MaskedDocRecord>, Option<&MaskedDocRecord>)> =
        BTreeMap::new();
    for r in records {
        let e = by_key.entry((r.repo_id.clone(), r.sha.clone())).or_default();
        match r.side {
            Side::Difficult => e.0 = Some(r),
            Side::Simple => e.1 = Some(r),
        }
    }
    let mut out = Vec::new();
    for ((repo, sha), pair) in by_key {
        match pair {
            (Some(d), Some(s)) => out.push((
                format!("{repo}@{sha}"),
                AlignmentProblem {
                    simple: sentences(&s.sentences),
                    regular: sentences(&d.sentences),
                },
            )),
            _ => log::warn!("document {repo}@{sha} lacks one side; skipped"),
        }
    }
    out
}

/// TF-IDF model over every sentence of every record.
pub fn fit_record_tfidf(records: &[MaskedDocRecord]) -> Result<TfidfModel> {
    let all: Vec<&str> = records
        .iter()
        .flat_map(|r| r.sentences.iter().map(String::as_str))
        .collect();
    TfidfModel::fit(&all)
}

/// Seeded shuffle, then the first `train` pairs go to train, the next `valid`
/// to valid and the rest to test. Pair order is unchanged.
pub fn split_dataset(pairs: &mut [AlignedPair], train: usize, valid: usize, seed: u64) -> Result<()> {
    if train + valid > pairs.len() {
        return Err(Error::InsufficientData(format!(
            "requested {train} train + {valid} valid pairs but only {} exist",
            pairs.len()
        )));
    }
    let mut idx: Vec<usize> = (0..pairs.len()).collect();
    idx.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    for (rank, &i) in idx.iter().enumerate() {
        pairs[i].split = if rank < train {
            Split::Train
        } else if rank < train + valid {
            Split::Valid
        } else {
            Split::Test
        };
    }
    Ok(())
}
