use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Sparse vector with strictly increasing indices.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct SparseVector {
    pub entries: Vec<(usize, f64)>,
}

impl SparseVector {
    pub fn norm(&self) -> f64 {
        self.entries.iter().map(|(_, w)| w * w).sum::<f64>().sqrt()
    }

    pub fn dot(&self, other: &SparseVector) -> f64 {
        let (mut i, mut j, mut acc) = (0, 0, 0.0);
        while i < self.entries.len() && j < other.entries.len() {
            let (a, wa) = self.entries[i];
            let (b, wb) = other.entries[j];
            match a.cmp(&b) {
                std::cmp::Ordering::Less => i += 1,
                std::cmp::Ordering::Greater => j += 1,
                std::cmp::Ordering::Equal => {
                    acc += wa * wb;
                    i += 1;
                    j += 1;
                }
            }
        }
        acc
    }

    pub fn is_zero(&self) -> bool {
        self.entries.iter().all(|&(_, w)| w == 0.0)
    }
}

/// Smoothed TF-IDF over lowercase whitespace tokens.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TfidfModel {
    pub vocabulary: BTreeMap<String, usize>,
    pub idf: Vec<f64>,
    pub document_count: usize,
}

fn tokens(sentence: &str) -> impl Iterator<Item = String> + '_ {
    sentence.split_whitespace().map(str::to_lowercase)
}

impl TfidfModel {
    /// Fits vocabulary and `idf(w) = ln((1 + N) / (1 + df(w))) + 1`.
    pub fn fit<S: AsRef<str>>(corpus: &[S]) -> Result<Self> {
        if corpus.is_empty() {
            return Err(Error::InsufficientData("cannot fit TF-IDF on an empty corpus".into()));
        }
        let mut df: BTreeMap<String, usize> = BTreeMap::new();
        for doc in corpus {
            let mut seen: Vec<String> = tokens(doc.as_ref()).collect();
            seen.sort();
            seen.dedup();
            for w in seen {
                *df.entry(w).or_default() += 1;
            }
        }
        let n = corpus.len() as f64;
        let mut vocabulary = BTreeMap::new();
        let mut idf = Vec::with_capacity(df.len());
        for (i, (w, d)) in df.into_iter().enumerate() {
            vocabulary.insert(w, i);
            idf.push(((1.0 + n) / (1.0 + d as f64)).ln() + 1.0);
        }
        Ok(TfidfModel {
            vocabulary,
            idf,
            document_count: corpus.len(),
        })
    }

    pub fn document_frequency_idf(&self, word: &str) -> Option<f64> {
        self.vocabulary.get(word).map(|&i| self.idf[i])
    }

    /// Raw term frequency times idf, L2-normalized. Unknown words are ignored.
    pub fn vectorize(&self, sentence: &str) -> SparseVector {
        let mut tf: BTreeMap<usize, f64> = BTreeMap::new();
        for w in tokens(sentence) {
            if let Some(&i) = self.vocabulary.get(&w) {
                *tf.entry(i).or_default() += 1.0;
            }
        }
        let mut v = SparseVector {
            entries: tf.into_iter().map(|(i, c)| (i, c * self.idf[i])).collect(),
        };
        let norm = v.norm();
        if norm > 0.0 {
            for e in &mut v.entries {
                e.1 /= norm;
            }
        }
        v
    }

    pub fn distance(&self, a: &str, b: &str) -> f64 {
        cosine_distance(&self.vectorize(a), &self.vectorize(b))
    }
}

/// `1 - cos(u, v)` clamped to `[0, 1]`; 1 when either vector is zero.
pub fn cosine_distance(u: &SparseVector, v: &SparseVector) -> f64 {
    let (nu, nv) = (u.norm(), v.norm());
    if nu == 0.0 || nv == 0.0 {
        return 1.0;
    }
    (1.0 - u.dot(v) / (nu * nv)).clamp(0.0, 1.0)
}
