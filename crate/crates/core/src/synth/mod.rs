//! Seeded synthetic corpora for training experiments.
//!
//! The simplification rule is deletion of bracketed asides:
//! `the tool ( quite old ) runs fast` becomes `the tool runs fast`. Two styles
//! differ only in the bracket pair, which gives a related source task for
//! transfer experiments.
//!
//! [`build_git_fixture`] creates small git repositories for harvesting runs.

mod repos;

pub use repos::{build_git_fixture, pretrain_pairs, FixtureRepo};

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

const WORDS: &[&str] = &[
    "the", "tool", "runs", "fast", "on", "linux", "and", "mac", "it", "reads", "files", "from", "disk", "then",
    "writes", "logs", "to", "a", "small", "cache", "users", "can", "set", "options", "in", "config", "build",
    "with", "cargo", "tests", "pass", "every", "night", "docs", "are", "online", "server", "starts", "quickly",
    "data", "stays", "local", "plugins", "add", "new", "commands", "old", "very",
];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum BracketStyle {
    /// `( ... )` asides.
    Round,
    /// `[ ... ]` asides.
    Square,
}

impl BracketStyle {
    fn pair(self) -> (&'static str, &'static str) {
        match self {
            BracketStyle::Round => ("(", ")"),
            BracketStyle::Square => ("[", "]"),
        }
    }
}

/// Shape of the generated sentences.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct SynthShape {
    pub min_words: usize,
    pub max_words: usize,
    pub max_aside: usize,
}

impl Default for SynthShape {
    fn default() -> Self {
        SynthShape {
            min_words: 3,
            max_words: 6,
            max_aside: 3,
        }
    }
}

/// `n` pairs of `(regular, simple)` where the regular side has one bracketed
/// aside of 1 to `max_aside` words and the simple side omits it.
pub fn bracket_corpus(n: usize, seed: u64, style: BracketStyle, shape: SynthShape) -> Vec<(String, String)> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (open, close) = style.pair();
    (0..n)
        .map(|_| {
            let len = rng.gen_range(shape.min_words..=shape.max_words);
            let kept: Vec<&str> = (0..len).map(|_| *WORDS.choose(&mut rng).expect("nonempty")).collect();
            let aside_len = rng.gen_range(1..=shape.max_aside.max(1));
            let aside: Vec<&str> = (0..aside_len).map(|_| *WORDS.choose(&mut rng).expect("nonempty")).collect();
            let at = rng.gen_range(0..=kept.len());
            let mut regular: Vec<&str> = kept[..at].to_vec();
            regular.push(open);
            regular.extend(&aside);
            regular.push(close);
            regular.extend(&kept[at..]);
            (regular.join(" "), kept.join(" "))
        })
        .collect()
}
