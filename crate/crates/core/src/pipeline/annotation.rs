//! Blinded human-evaluation batches and their analysis.
//!
//! Export deduplicates identical model outputs per item, shuffles the
//! variants, and hides one attention-check row (the gate) at a seeded random
//! position. Annotators see only the blinded file; the key file maps every
//! blinded variant back to the models that produced it.

use std::collections::{BTreeMap, BTreeSet};

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::metrics::{krippendorff_alpha, wilcoxon_signed_rank, DifferenceMetric, RatingTable};

/// Nonsense output used as the attention check.
pub const GATE_SENTENCE: &str =
    "The purple monkey dishwasher sang shenanigans on the moon with unicorns and marshmallow socks.";

/// Raters giving the gate a semantics score at or above this are dropped.
pub const GATE_FAIL_SEMANTICS: u8 = 3;

/// A "good" output scores at least this on both semantics and grammar.
pub const GOOD_THRESHOLD: u8 = 4;

/// One row shown to annotators.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct BlindedItem {
    pub item_id: String,
    pub original: String,
    pub variants: Vec<String>,
}

/// Unblinding information for one row.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct KeyItem {
    pub item_id: String,
    pub is_gate: bool,
    /// Index of the original sentence in the exported list; `None` for the
    /// gate.
    pub source_index: Option<usize>,
    pub original: String,
    pub variants: Vec<String>,
    /// Models behind each blinded variant, in blinded order.
    pub models: Vec<Vec<String>>,
    /// `shuffled_order[j]` is the position of blinded variant `j` in the
    /// deduplicated, model-ordered variant list.
    pub shuffled_order: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AnnotationBatch {
    pub blinded: Vec<BlindedItem>,
    pub key: Vec<KeyItem>,
    pub gate_position: usize,
    pub gate_sentence: String,
}

/// Builds a blinded batch from `originals` and one output list per model.
///
/// Identical outputs of different models become one variant. Variant order
/// within each item and the gate position are drawn from `seed`. The gate
/// row pairs a randomly chosen original with [`GATE_SENTENCE`]. Item ids
/// `q001`, `q002`, ... follow file order and reveal nothing.
pub fn export_annotation_batch(
    originals: &[String],
    model_outputs: &BTreeMap<String, Vec<String>>,
    seed: u64,
) -> Result<AnnotationBatch> {
    if originals.is_empty() || model_outputs.is_empty() {
        return Err(Error::InsufficientData("annotation export needs originals and model outputs".into()));
    }
    for (model, outs) in model_outputs {
        if outs.len() != originals.len() {
            return Err(Error::InvalidInput(format!(
                "model {model} has {} outputs for {} originals",
                outs.len(),
                originals.len()
            )));
        }
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut rows: Vec<(Option<usize>, String, Vec<String>, Vec<Vec<String>>, Vec<usize>)> = Vec::new();
    for (i, original) in originals.iter().enumerate() {
        let mut variants: Vec<String> = Vec::new();
        let mut models: Vec<Vec<String>> = Vec::new();
        for (model, outs) in model_outputs {
            let text = outs[i].trim().to_string();
            match variants.iter().position(|v| *v == text) {
                Some(j) => models[j].push(model.clone()),
                None => {
                    variants.push(text);
                    models.push(vec![model.clone()]);
                }
            }
        }
        let mut order: Vec<usize> = (0..variants.len()).collect();
        order.shuffle(&mut rng);
        rows.push((
            Some(i),
            original.clone(),
            order.iter().map(|&j| variants[j].clone()).collect(),
            order.iter().map(|&j| models[j].clone()).collect(),
            order,
        ));
    }
    let gate_position = rng.gen_range(0..=rows.len());
    let gate_original = originals[rng.gen_range(0..originals.len())].clone();
    rows.insert(
        gate_position,
        (None, gate_original, vec![GATE_SENTENCE.to_string()], vec![Vec::new()], vec![0]),
    );

    let width = rows.len().to_string().len().max(3);
    let mut blinded = Vec::new();
    let mut key = Vec::new();
    for (k, (source_index, original, variants, models, order)) in rows.into_iter().enumerate() {
        let item_id = format!("q{:0width$}", k + 1);
        blinded.push(BlindedItem {
            item_id: item_id.clone(),
            original: original.clone(),
            variants: variants.clone(),
        });
        key.push(KeyItem {
            item_id,
            is_gate: source_index.is_none(),
            source_index,
            original,
            variants,
            models,
            shuffled_order: order,
        });
    }
    Ok(AnnotationBatch {
        blinded,
        key,
        gate_position,
        gate_sentence: GATE_SENTENCE.to_string(),
    })
}

/// One annotator's scores for one blinded variant. Missing aspects are
/// allowed.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Rating {
    pub rater: String,
    pub item_id: String,
    pub variant: usize,
    pub semantics: Option<u8>,
    pub grammar: Option<u8>,
    pub simplicity: Option<u8>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Aspect {
    Semantics,
    Grammar,
    Simplicity,
}

impl Aspect {
    pub const ALL: [Aspect; 3] = [Aspect::Semantics, Aspect::Grammar, Aspect::Simplicity];

    fn of(self, r: &Rating) -> Option<u8> {
        match self {
            Aspect::Semantics => r.semantics,
            Aspect::Grammar => r.grammar,
            Aspect::Simplicity => r.simplicity,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AspectSummary {
    pub mean: Option<f64>,
    pub ratings: usize,
    /// Ratings of at least [`GOOD_THRESHOLD`].
    pub at_least_4: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelSummary {
    pub semantics: AspectSummary,
    pub grammar: AspectSummary,
    pub simplicity: AspectSummary,
    /// Ratings with both semantics and grammar at least [`GOOD_THRESHOLD`].
    pub good: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PairwiseTest {
    pub aspect: Aspect,
    pub model_a: String,
    pub model_b: String,
    /// Paired ratings entering the test.
    pub pairs: usize,
    pub statistic: Option<f64>,
    pub p_value: Option<f64>,
    /// Why no test was computed, if none was.
    pub note: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AnnotationReport {
    pub raters: Vec<String>,
    pub excluded_raters: Vec<String>,
    pub models: BTreeMap<String, ModelSummary>,
    /// Interval Krippendorff's alpha per aspect over kept raters; `None` when
    /// fewer than two variants have two ratings.
    pub alpha: BTreeMap<Aspect, Option<f64>>,
    pub tests: Vec<PairwiseTest>,
}

fn summarize(values: &[u8]) -> AspectSummary {
    AspectSummary {
        mean: (!values.is_empty()).then(|| values.iter().map(|&v| v as f64).sum::<f64>() / values.len() as f64),
        ratings: values.len(),
        at_least_4: values.iter().filter(|&&v| v >= GOOD_THRESHOLD).count(),
    }
}

/// Unblinds `ratings` with `key` and computes the evaluation report.
///
/// Raters whose gate semantics score is missing or at least
/// [`GATE_FAIL_SEMANTICS`] are excluded entirely. A rating of a variant
/// shared by several models counts for each of them. Pairwise Wilcoxon tests
/// pair the two models' ratings by the same rater on the same item; for
/// simplicity, items where either model returned the original unchanged are
/// left out.
pub fn analyze_annotations(key: &[KeyItem], ratings: &[Rating]) -> Result<AnnotationReport> {
    let items: BTreeMap<&str, &KeyItem> = key.iter().map(|k| (k.item_id.as_str(), k)).collect();
    for r in ratings {
        let item = items
            .get(r.item_id.as_str())
            .ok_or_else(|| Error::InvalidInput(format!("rating by {} names unknown item {}", r.rater, r.item_id)))?;
        if r.variant >= item.variants.len() {
            return Err(Error::InvalidInput(format!(
                "rating by {} names variant {} of item {}, which has {}",
                r.rater,
                r.variant,
                r.item_id,
                item.variants.len()
            )));
        }
        for v in [r.semantics, r.grammar, r.simplicity].into_iter().flatten() {
            if !(1..=5).contains(&v) {
                return Err(Error::InvalidInput(format!("rating {v} by {} outside 1..=5", r.rater)));
            }
        }
    }
    let all_raters: BTreeSet<&str> = ratings.iter().map(|r| r.rater.as_str()).collect();
    let gate_ids: BTreeSet<&str> = key.iter().filter(|k| k.is_gate).map(|k| k.item_id.as_str()).collect();
    let passed: BTreeSet<&str> = ratings
        .iter()
        .filter(|r| gate_ids.contains(r.item_id.as_str()) && r.semantics.is_some_and(|s| s < GATE_FAIL_SEMANTICS))
        .map(|r| r.rater.as_str())
        .collect();
    let excluded: Vec<String> = all_raters.difference(&passed).map(|s| s.to_string()).collect();
    let kept: Vec<&Rating> = ratings
        .iter()
        .filter(|r| passed.contains(r.rater.as_str()) && !gate_ids.contains(r.item_id.as_str()))
        .collect();

    let model_names: BTreeSet<&str> = key.iter().flat_map(|k| k.models.iter().flatten()).map(String::as_str).collect();
    // (model, rater, item) -> rating
    let mut by_model: BTreeMap<(&str, &str, &str), &Rating> = BTreeMap::new();
    for r in &kept {
        for m in &items[r.item_id.as_str()].models[r.variant] {
            by_model.insert((m.as_str(), r.rater.as_str(), r.item_id.as_str()), r);
        }
    }

    let mut models = BTreeMap::new();
    for &m in &model_names {
        let rs: Vec<&Rating> = by_model.range((m, "", "")..).take_while(|(k, _)| k.0 == m).map(|(_, r)| *r).collect();
        let col = |a: Aspect| rs.iter().filter_map(|r| a.of(r)).collect::<Vec<u8>>();
        let good = rs
            .iter()
            .filter(|r| r.semantics.is_some_and(|s| s >= GOOD_THRESHOLD) && r.grammar.is_some_and(|g| g >= GOOD_THRESHOLD))
            .count();
        models.insert(
            m.to_string(),
            ModelSummary {
                semantics: summarize(&col(Aspect::Semantics)),
                grammar: summarize(&col(Aspect::Grammar)),
                simplicity: summarize(&col(Aspect::Simplicity)),
                good,
            },
        );
    }

    let kept_raters: Vec<&str> = passed.iter().copied().collect();
    let units: Vec<(&str, usize)> = key
        .iter()
        .filter(|k| !k.is_gate)
        .flat_map(|k| (0..k.variants.len()).map(move |v| (k.item_id.as_str(), v)))
        .collect();
    let unit_index: BTreeMap<(&str, usize), usize> = units.iter().enumerate().map(|(i, &u)| (u, i)).collect();
    let mut alpha = BTreeMap::new();
    for a in Aspect::ALL {
        let mut rows = vec![vec![None; units.len()]; kept_raters.len()];
        for r in &kept {
            let row = kept_raters.iter().position(|x| *x == r.rater).expect("kept rater");
            rows[row][unit_index[&(r.item_id.as_str(), r.variant)]] = a.of(r);
        }
        let value = RatingTable::new(rows)
            .and_then(|t| krippendorff_alpha(&t, DifferenceMetric::Interval))
            .ok();
        alpha.insert(a, value);
    }

    let names: Vec<&str> = model_names.iter().copied().collect();
    let mut tests = Vec::new();
    for a in Aspect::ALL {
        for i in 0..names.len() {
            for j in i + 1..names.len() {
                let (ma, mb) = (names[i], names[j]);
                let mut xs = Vec::new();
                let mut ys = Vec::new();
                for (&(m, rater, item), ra) in by_model.range((ma, "", "")..).take_while(|(k, _)| k.0 == ma) {
                    debug_assert_eq!(m, ma);
                    let Some(rb) = by_model.get(&(mb, rater, item)) else { continue };
                    if a == Aspect::Simplicity {
                        let k = items[item];
                        let unchanged = |r: &Rating| k.variants[r.variant].trim() == k.original.trim();
                        if unchanged(ra) || unchanged(rb) {
                            continue;
                        }
                    }
                    if let (Some(x), Some(y)) = (a.of(ra), a.of(rb)) {
                        xs.push(x as f64);
                        ys.push(y as f64);
                    }
                }
                let (statistic, p_value, note) = match wilcoxon_signed_rank(&xs, &ys) {
                    Ok(w) => (Some(w.statistic), Some(w.p_value), None),
                    Err(e) => (None, None, Some(e.to_string())),
                };
                tests.push(PairwiseTest {
                    aspect: a,
                    model_a: ma.to_string(),
                    model_b: mb.to_string(),
                    pairs: xs.len(),
                    statistic,
                    p_value,
                    note,
                });
            }
        }
    }

    Ok(AnnotationReport {
        raters: kept_raters.iter().map(|s| s.to_string()).collect(),
        excluded_raters: excluded,
        models,
        alpha,
        tests,
    })
}

impl AnnotationReport {
    /// Plain-text table of per-model results.
    pub fn render(&self) -> String {
        let fmt = |s: &AspectSummary| s.mean.map_or("-".to_string(), |m| format!("{m:.2}"));
        let mut out = format!(
            "{:<20} {:>9} {:>8} {:>10} {:>6}\n",
            "model", "semantics", "grammar", "simplicity", "#good"
        );
        for (m, s) in &self.models {
            out.push_str(&format!(
                "{:<20} {:>9} {:>8} {:>10} {:>6}\n",
                m,
                fmt(&s.semantics),
                fmt(&s.grammar),
                fmt(&s.simplicity),
                s.good
            ));
        }
        out.push_str(&format!(
            "raters kept: {}, excluded by gate: {}\n",
            self.raters.len(),
            self.excluded_raters.len()
        ));
        for (a, v) in &self.alpha {
            out.push_str(&format!(
                "alpha {:?}: {}\n",
                a,
                v.map_or("undefined".into(), |x| format!("{x:.3}"))
            ));
        }
        out
    }
}
