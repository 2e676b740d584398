use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// One row of the corpus statistics table: simple side, regular side and the
/// simple/regular ratio (`None` when the regular value is 0).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StatRow {
    pub simple: f64,
    pub regular: f64,
    pub ratio: Option<f64>,
}

impl StatRow {
    fn new(simple: f64, regular: f64) -> Self {
        StatRow {
            simple,
            regular,
            ratio: (regular != 0.0).then(|| simple / regular),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CorpusStats {
    #[serde(rename = "Average Length")]
    pub average_length: StatRow,
    #[serde(rename = "Vocabulary Size")]
    pub vocabulary_size: StatRow,
    #[serde(rename = "Exclusive Vocab Size")]
    pub exclusive_vocab_size: StatRow,
}

/// Token statistics over whitespace-tokenized sentences of both sides.
pub fn corpus_stats<S: AsRef<str>, R: AsRef<str>>(simple: &[S], regular: &[R]) -> Result<CorpusStats> {
    if simple.is_empty() || regular.is_empty() {
        return Err(Error::InsufficientData("corpus statistics need both sides nonempty".into()));
    }
    fn side<S: AsRef<str>>(sentences: &[S]) -> (f64, BTreeSet<&str>) {
        let mut vocab = BTreeSet::new();
        let mut tokens = 0usize;
        for s in sentences {
            for w in s.as_ref().split_whitespace() {
                tokens += 1;
                vocab.insert(w);
            }
        }
        (tokens as f64 / sentences.len() as f64, vocab)
    }
    let (len_s, voc_s) = side(simple);
    let (len_r, voc_r) = side(regular);
    let excl_s = voc_s.difference(&voc_r).count();
    let excl_r = voc_r.difference(&voc_s).count();
    Ok(CorpusStats {
        average_length: StatRow::new(len_s, len_r),
        vocabulary_size: StatRow::new(voc_s.len() as f64, voc_r.len() as f64),
        exclusive_vocab_size: StatRow::new(excl_s as f64, excl_r as f64),
    })
}
