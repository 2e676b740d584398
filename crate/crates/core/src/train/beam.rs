use std::cmp::Ordering;

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::metrics::{bleu_tokens, corpus_bleu, BleuWeights, CorpusBleu};
use crate::nn::{encode_source, next_token_log_probs, ModelConfig, Parameters};
use crate::wordpiece::{WordPieceModel, EOS_ID, SOS_ID};

/// A partial or complete output sequence.
#[derive(Debug, Clone, PartialEq)]
pub struct Hypothesis {
    /// Token ids starting with `<sos>`.
    pub tokens: Vec<usize>,
    pub log_prob: f64,
    pub finished: bool,
}

impl Hypothesis {
    /// Generated tokens without `<sos>` and a final `<eos>`.
    pub fn output(&self) -> &[usize] {
        let body = &self.tokens[1..];
        body.strip_suffix(&[EOS_ID]).unwrap_or(body)
    }

    /// Log-probability divided by the number of generated tokens.
    pub fn score(&self) -> f64 {
        let n = self.tokens.len() - 1;
        if n == 0 {
            0.0
        } else {
            self.log_prob / n as f64
        }
    }
}

/// Higher score first; equal scores fall back to the lexicographically
/// smaller token sequence.
fn rank(a: (f64, &[usize]), b: (f64, &[usize])) -> Ordering {
    b.0.total_cmp(&a.0).then_with(|| a.1.cmp(b.1))
}

/// Log-probabilities never rise, so a live hypothesis scores at most its
/// current log-probability spread over the longest allowed length.
fn live_can_win(finished: &[Hypothesis], live: &[Hypothesis], limit: usize) -> bool {
    let Some(best) = finished.iter().map(Hypothesis::score).max_by(f64::total_cmp) else {
        return true;
    };
    live.iter().any(|h| h.log_prob / limit as f64 >= best)
}

fn generation_limit(model: &ModelConfig, max_len: usize) -> usize {
    max_len.min(model.max_len.saturating_sub(1))
}

/// Length-normalized beam search. Each step expands every live hypothesis
/// by every token and keeps the `k` best; hypotheses ending in `<eos>` are
/// set aside. The search stops once no live hypothesis can still beat the
/// best finished one, or after `max_len` generated tokens, when the live
/// hypotheses compete as they are. Ties go to the lowest token ids.
pub fn beam_search(
    model: &ModelConfig,
    params: &Parameters<f32>,
    src: &[usize],
    k: usize,
    max_len: usize,
) -> Result<Hypothesis> {
    if k == 0 {
        return Err(Error::InvalidInput("beam size must be at least 1".into()));
    }
    if src.is_empty() {
        return Err(Error::InvalidInput("cannot generate from an empty source".into()));
    }
    let src = &src[..src.len().min(model.max_len)];
    let limit = generation_limit(model, max_len);
    let memory = encode_source(model, params, src)?;
    let mut live = vec![Hypothesis {
        tokens: vec![SOS_ID],
        log_prob: 0.0,
        finished: false,
    }];
    let mut finished: Vec<Hypothesis> = Vec::new();
    let mut truncated = true;
    for _ in 0..limit {
        let prefixes: Vec<Vec<usize>> = live.iter().map(|h| h.tokens.clone()).collect();
        let rows = next_token_log_probs(model, params, src, &memory, &prefixes)?;
        // every live hypothesis has the same length, so raw log-probabilities
        // rank candidates exactly as normalized scores do
        let mut cands: Vec<(f64, Vec<usize>)> = Vec::with_capacity(live.len() * model.vocab_size);
        for (h, row) in live.iter().zip(&rows) {
            for (tok, &lp) in row.iter().enumerate() {
                let mut tokens = h.tokens.clone();
                tokens.push(tok);
                cands.push((h.log_prob + lp, tokens));
            }
        }
        cands.sort_by(|a, b| rank((a.0, &a.1), (b.0, &b.1)));
        live.clear();
        for (log_prob, tokens) in cands.into_iter().take(k) {
            let done = tokens.last() == Some(&EOS_ID);
            let h = Hypothesis {
                tokens,
                log_prob,
                finished: done,
            };
            if done {
                finished.push(h);
            } else {
                live.push(h);
            }
        }
        if live.is_empty() || !live_can_win(&finished, &live, limit) {
            truncated = false;
            break;
        }
    }
    // prefixes still live after an early stop are not outputs
    if truncated {
        finished.extend(live.into_iter().map(|h| Hypothesis { finished: true, ..h }));
    }
    finished
        .into_iter()
        .min_by(|a, b| rank((a.score(), &a.tokens), (b.score(), &b.tokens)))
        .ok_or_else(|| Error::InvalidInput("generation limit is zero".into()))
}

/// Repeatedly takes the most probable next token (lowest id on ties).
pub fn greedy(model: &ModelConfig, params: &Parameters<f32>, src: &[usize], max_len: usize) -> Result<Hypothesis> {
    if src.is_empty() {
        return Err(Error::InvalidInput("cannot generate from an empty source".into()));
    }
    let src = &src[..src.len().min(model.max_len)];
    let memory = encode_source(model, params, src)?;
    let mut h = Hypothesis {
        tokens: vec![SOS_ID],
        log_prob: 0.0,
        finished: false,
    };
    for _ in 0..generation_limit(model, max_len) {
        let row = next_token_log_probs(model, params, src, &memory, std::slice::from_ref(&h.tokens))?.remove(0);
        let (tok, lp) = row
            .iter()
            .enumerate()
            .fold((0, f64::NEG_INFINITY), |best, (i, &v)| if v > best.1 { (i, v) } else { best });
        h.tokens.push(tok);
        h.log_prob += lp;
        if tok == EOS_ID {
            break;
        }
    }
    h.finished = true;
    Ok(h)
}

/// Model log-probability of emitting `tokens` (starting with `<sos>`) for
/// `src`, scored step by step like the decoders above.
pub fn sequence_log_prob(model: &ModelConfig, params: &Parameters<f32>, src: &[usize], tokens: &[usize]) -> Result<f64> {
    if tokens.first() != Some(&SOS_ID) {
        return Err(Error::InvalidInput("sequence must start with <sos>".into()));
    }
    let src = &src[..src.len().min(model.max_len)];
    let memory = encode_source(model, params, src)?;
    let mut total = 0.0;
    for i in 1..tokens.len() {
        let row = next_token_log_probs(model, params, src, &memory, &[tokens[..i].to_vec()])?.remove(0);
        total += row[tokens[i]];
    }
    Ok(total)
}

/// Tokenizes `text`, runs beam search and decodes the best hypothesis.
pub fn generate_text(
    model: &ModelConfig,
    params: &Parameters<f32>,
    tokenizer: &WordPieceModel,
    text: &str,
    k: usize,
    max_len: usize,
) -> Result<String> {
    let src = tokenizer.encode(text, false);
    if src.is_empty() {
        return Ok(String::new());
    }
    let h = beam_search(model, params, &src, k, max_len)?;
    tokenizer.decode(h.output())
}

/// Generates for every source in parallel (output order follows input).
pub fn generate_all<S: AsRef<str> + Sync>(
    model: &ModelConfig,
    params: &Parameters<f32>,
    tokenizer: &WordPieceModel,
    sources: &[S],
    k: usize,
    max_len: usize,
) -> Result<Vec<String>> {
    sources
        .par_iter()
        .map(|s| generate_text(model, params, tokenizer, s.as_ref(), k, max_len))
        .collect()
}

/// Corpus BLEU of beam-search outputs against references, with the outputs.
pub fn evaluate_bleu<S: AsRef<str> + Sync, R: AsRef<str>>(
    model: &ModelConfig,
    params: &Parameters<f32>,
    tokenizer: &WordPieceModel,
    pairs: &[(S, R)],
    k: usize,
    max_len: usize,
) -> Result<(CorpusBleu, Vec<String>)> {
    if pairs.is_empty() {
        return Err(Error::InsufficientData("BLEU needs a nonempty test set".into()));
    }
    let sources: Vec<&str> = pairs.iter().map(|(s, _)| s.as_ref()).collect();
    let outputs = generate_all(model, params, tokenizer, &sources, k, max_len)?;
    let scored: Vec<(Vec<&str>, Vec<&str>)> = outputs
        .iter()
        .zip(pairs)
        .map(|(o, (_, r))| (bleu_tokens(o), bleu_tokens(r.as_ref())))
        .collect();
    Ok((corpus_bleu(&scored, BleuWeights::default())?, outputs))
}
