use std::collections::HashMap;
use std::path::Path;

use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::metrics::TfidfModel;

/// Decides whether a simple sentence and a regular sentence are aligned.
pub trait SimilarityScorer: Sync {
    /// Similarity in `[0, 1]`, higher meaning more aligned.
    fn score(&self, simple: &str, regular: &str) -> Result<f64>;

    /// Score at or above which a pair counts as aligned.
    fn cutoff(&self) -> f64 {
        0.5
    }

    fn aligned(&self, simple: &str, regular: &str) -> Result<bool> {
        Ok(self.score(simple, regular)? >= self.cutoff())
    }
}

/// Cosine similarity of TF-IDF vectors.
pub struct TfidfScorer<'a> {
    pub model: &'a TfidfModel,
    pub cutoff: f64,
}

impl<'a> TfidfScorer<'a> {
    pub fn new(model: &'a TfidfModel) -> Self {
        TfidfScorer { model, cutoff: 0.5 }
    }
}

impl SimilarityScorer for TfidfScorer<'_> {
    fn score(&self, simple: &str, regular: &str) -> Result<f64> {
        Ok(1.0 - self.model.distance(simple, regular))
    }

    fn cutoff(&self) -> f64 {
        self.cutoff
    }
}

/// Hex SHA-256 of a sentence, the key used by score files.
pub fn sentence_hash(text: &str) -> String {
    hex::encode(Sha256::digest(text.as_bytes()))
}

/// Precomputed scores from a `simple_hash<TAB>regular_hash<TAB>score` file,
/// for example produced by an external classifier.
#[derive(Debug, Clone, Default)]
pub struct FileScorer {
    scores: HashMap<(String, String), f64>,
    pub cutoff: f64,
}

impl FileScorer {
    pub fn from_entries<I: IntoIterator<Item = (String, String, f64)>>(entries: I) -> Self {
        FileScorer {
            scores: entries.into_iter().map(|(s, r, v)| ((s, r), v)).collect(),
            cutoff: 0.5,
        }
    }

    /// Reads a score file. A first line starting with `simple_hash` is taken
    /// as a header.
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let mut entries = Vec::new();
        for (i, line) in text.lines().enumerate() {
            if line.trim().is_empty() || (i == 0 && line.starts_with("simple_hash")) {
                continue;
            }
            let parse_err = |message: String| Error::Parse {
                path: path.to_path_buf(),
                line: i + 1,
                message,
            };
            let cols: Vec<&str> = line.split('\t').collect();
            if cols.len() != 3 {
                return Err(parse_err(format!("expected 3 columns, found {}", cols.len())));
            }
            let score: f64 = cols[2]
                .trim()
                .parse()
                .map_err(|e| parse_err(format!("bad score {:?}: {e}", cols[2])))?;
            if !(0.0..=1.0).contains(&score) {
                return Err(parse_err(format!("score {score} outside [0, 1]")));
            }
            entries.push((cols[0].trim().to_string(), cols[1].trim().to_string(), score));
        }
        Ok(Self::from_entries(entries))
    }
}

impl SimilarityScorer for FileScorer {
    fn score(&self, simple: &str, regular: &str) -> Result<f64> {
        let key = (sentence_hash(simple), sentence_hash(regular));
        self.scores.get(&key).copied().ok_or_else(|| Error::MissingScore {
            simple: simple.to_string(),
            regular: regular.to_string(),
        })
    }

    fn cutoff(&self) -> f64 {
        self.cutoff
    }
}
