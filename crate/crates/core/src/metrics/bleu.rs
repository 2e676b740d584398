use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Weights of the 1- to 4-gram precisions.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BleuWeights(pub [f64; 4]);

impl Default for BleuWeights {
    fn default() -> Self {
        BleuWeights([0.25; 4])
    }
}

impl BleuWeights {
    pub fn new(w: [f64; 4]) -> Result<Self> {
        let sum: f64 = w.iter().sum();
        if w.iter().any(|x| !x.is_finite() || *x < 0.0) || (sum - 1.0).abs() > 1e-9 {
            return Err(Error::InvalidInput(format!(
                "BLEU weights must be nonnegative and sum to 1, got {w:?}"
            )));
        }
        Ok(BleuWeights(w))
    }
}

fn ngram_counts<T: Ord>(tokens: &[T], n: usize) -> BTreeMap<&[T], usize> {
    let mut counts = BTreeMap::new();
    if tokens.len() >= n {
        for g in tokens.windows(n) {
            *counts.entry(g).or_insert(0) += 1;
        }
    }
    counts
}

/// Clipped n-gram matches and the number of candidate n-grams.
fn clipped<T: Ord>(candidate: &[T], reference: &[T], n: usize) -> (usize, usize) {
    let total = (candidate.len() + 1).saturating_sub(n);
    let refc = ngram_counts(reference, n);
    let matched = ngram_counts(candidate, n)
        .into_iter()
        .map(|(g, c)| c.min(refc.get(g).copied().unwrap_or(0)))
        .sum();
    (matched, total)
}

fn brevity_penalty(c: usize, r: usize) -> f64 {
    (1.0 - r as f64 / c as f64).min(0.0).exp()
}

/// Sentence-level BLEU in `[0, 1]`.
///
/// Candidates shorter than four tokens use only the orders they have, with the
/// weights renormalized over those orders. Any used precision of zero gives 0,
/// as does an empty candidate or reference.
pub fn sentence_bleu<T: Ord>(candidate: &[T], reference: &[T], weights: BleuWeights) -> f64 {
    if candidate.is_empty() || reference.is_empty() {
        return 0.0;
    }
    let orders = candidate.len().min(4);
    let wsum: f64 = weights.0[..orders].iter().sum();
    if wsum <= 0.0 {
        return 0.0;
    }
    let mut log_p = 0.0;
    for n in 1..=orders {
        let w = weights.0[n - 1] / wsum;
        if w == 0.0 {
            continue;
        }
        let (m, t) = clipped(candidate, reference, n);
        if m == 0 {
            return 0.0;
        }
        log_p += w * (m as f64 / t as f64).ln();
    }
    brevity_penalty(candidate.len(), reference.len()) * log_p.exp()
}

/// Corpus BLEU, as a fraction and scaled by 100.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CorpusBleu {
    pub score: f64,
    pub x100: f64,
}

/// Corpus-level BLEU with n-gram statistics and lengths pooled over all
/// `(candidate, reference)` pairs. Always uses all four orders.
pub fn corpus_bleu<T: Ord, C: AsRef<[T]>, R: AsRef<[T]>>(
    pairs: &[(C, R)],
    weights: BleuWeights,
) -> Result<CorpusBleu> {
    if pairs.is_empty() {
        return Err(Error::InsufficientData("corpus BLEU needs at least one pair".into()));
    }
    let mut matched = [0usize; 4];
    let mut total = [0usize; 4];
    let (mut c, mut r) = (0, 0);
    for (cand, reference) in pairs {
        let (cand, reference) = (cand.as_ref(), reference.as_ref());
        c += cand.len();
        r += reference.len();
        for n in 1..=4 {
            let (m, t) = clipped(cand, reference, n);
            matched[n - 1] += m;
            total[n - 1] += t;
        }
    }
    let mut score = 0.0;
    if c > 0 {
        let mut log_p = 0.0;
        let mut zero = false;
        for n in 0..4 {
            if weights.0[n] == 0.0 {
                continue;
            }
            if matched[n] == 0 {
                zero = true;
                break;
            }
            log_p += weights.0[n] * (matched[n] as f64 / total[n] as f64).ln();
        }
        if !zero {
            score = brevity_penalty(c, r) * log_p.exp();
        }
    }
    Ok(CorpusBleu {
        score,
        x100: score * 100.0,
    })
}

/// Whitespace tokenization used for BLEU over text.
pub fn bleu_tokens(text: &str) -> Vec<&str> {
    text.split_whitespace().collect()
}
