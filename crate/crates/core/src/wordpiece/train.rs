use std::cmp::Ordering;
use std::collections::{BTreeMap, BTreeSet, HashMap};

use super::{pre_tokenize, Word, WordPieceModel, CONTINUATION, SPECIALS};
use crate::error::{Error, Result};

struct Interner {
    names: Vec<String>,
    ids: HashMap<String, u32>,
}

impl Interner {
    fn intern(&mut self, s: String) -> u32 {
        if let Some(&id) = self.ids.get(&s) {
            return id;
        }
        let id = self.names.len() as u32;
        self.ids.insert(s.clone(), id);
        self.names.push(s);
        id
    }
}

type Pair = (u32, u32);

struct State {
    words: Vec<Vec<u32>>,
    freq: Vec<u64>,
    sym_count: HashMap<u32, u64>,
    pair_count: HashMap<Pair, u64>,
    where_: HashMap<Pair, BTreeSet<usize>>,
}

impl State {
    fn account(&mut self, w: usize, sign: i64) {
        let f = self.freq[w];
        let seg = &self.words[w];
        for &s in seg {
            let c = self.sym_count.entry(s).or_default();
            *c = (*c as i64 + sign * f as i64) as u64;
        }
        for p in seg.windows(2) {
            let key = (p[0], p[1]);
            let c = self.pair_count.entry(key).or_default();
            *c = (*c as i64 + sign * f as i64) as u64;
            if *c == 0 {
                self.pair_count.remove(&key);
            }
            if sign > 0 {
                self.where_.entry(key).or_default().insert(w);
            } else if let Some(set) = self.where_.get_mut(&key) {
                set.remove(&w);
            }
        }
    }
}

/// `a` scores higher than `b`: larger `count(xy) / (count(x) count(y))`,
/// ties going to the lexicographically smaller pair.
fn better(a: (u64, u64, u64, &str, &str), b: (u64, u64, u64, &str, &str)) -> bool {
    let lhs = a.0 as u128 * b.1 as u128 * b.2 as u128;
    let rhs = b.0 as u128 * a.1 as u128 * a.2 as u128;
    match lhs.cmp(&rhs) {
        Ordering::Greater => true,
        Ordering::Less => false,
        Ordering::Equal => (a.3, a.4) < (b.3, b.4),
    }
}

fn merged_name(a: &str, b: &str) -> String {
    format!("{a}{}", b.strip_prefix(CONTINUATION).unwrap_or(b))
}

/// Trains a WordPiece vocabulary.
///
/// Starts from the specials plus every character seen (word-internal ones as
/// `##c`), then repeatedly merges the adjacent pair with the highest
/// `count(ab) / (count(a) count(b))` until the vocabulary holds `vocab_size`
/// tokens or no pair occurs at least twice. Ties go to the lexicographically
/// smallest pair, so training is deterministic.
pub fn train<S: AsRef<str>>(corpus: &[S], vocab_size: usize) -> Result<WordPieceModel> {
    if corpus.is_empty() {
        return Err(Error::InsufficientData("tokenizer training corpus is empty".into()));
    }
    let mut word_freq: BTreeMap<&str, u64> = BTreeMap::new();
    for line in corpus {
        for w in pre_tokenize(line.as_ref()) {
            if let Word::Plain(p) = w {
                *word_freq.entry(p).or_default() += 1;
            }
        }
    }

    let mut interner = Interner {
        names: Vec::new(),
        ids: HashMap::new(),
    };
    let mut alphabet = BTreeSet::new();
    let mut words = Vec::with_capacity(word_freq.len());
    let mut freq = Vec::with_capacity(word_freq.len());
    for (w, &f) in &word_freq {
        let seg: Vec<u32> = w
            .chars()
            .enumerate()
            .map(|(i, c)| {
                let s = if i == 0 { c.to_string() } else { format!("{CONTINUATION}{c}") };
                alphabet.insert(s.clone());
                interner.intern(s)
            })
            .collect();
        words.push(seg);
        freq.push(f);
    }

    let mut vocab: Vec<String> = SPECIALS.iter().map(|s| s.to_string()).collect();
    for a in &alphabet {
        if !SPECIALS.contains(&a.as_str()) {
            vocab.push(a.clone());
        }
    }
    if vocab_size < vocab.len() {
        return Err(Error::InvalidInput(format!(
            "vocab_size {vocab_size} is smaller than the {} specials plus {} alphabet symbols",
            SPECIALS.len(),
            vocab.len() - SPECIALS.len()
        )));
    }
    let mut in_vocab: BTreeSet<String> = vocab.iter().cloned().collect();

    let mut st = State {
        words,
        freq,
        sym_count: HashMap::new(),
        pair_count: HashMap::new(),
        where_: HashMap::new(),
    };
    for w in 0..st.words.len() {
        st.account(w, 1);
    }

    while vocab.len() < vocab_size {
        let mut best: Option<(Pair, u64)> = None;
        for (&pair, &c) in &st.pair_count {
            if c < 2 {
                continue;
            }
            let cand = (
                c,
                st.sym_count[&pair.0],
                st.sym_count[&pair.1],
                interner.names[pair.0 as usize].as_str(),
                interner.names[pair.1 as usize].as_str(),
            );
            let replace = match best {
                None => true,
                Some((bp, bc)) => better(
                    cand,
                    (
                        bc,
                        st.sym_count[&bp.0],
                        st.sym_count[&bp.1],
                        interner.names[bp.0 as usize].as_str(),
                        interner.names[bp.1 as usize].as_str(),
                    ),
                ),
            };
            if replace {
                best = Some((pair, c));
            }
        }
        let Some(((a, b), _)) = best else { break };
        let name = merged_name(&interner.names[a as usize], &interner.names[b as usize]);
        let ab = interner.intern(name.clone());
        if in_vocab.insert(name.clone()) {
            vocab.push(name);
        }
        let affected: Vec<usize> = st.where_.get(&(a, b)).map(|s| s.iter().copied().collect()).unwrap_or_default();
        for w in affected {
            st.account(w, -1);
            let old = std::mem::take(&mut st.words[w]);
            let mut seg = Vec::with_capacity(old.len());
            let mut i = 0;
            while i < old.len() {
                if i + 1 < old.len() && old[i] == a && old[i + 1] == b {
                    seg.push(ab);
                    i += 2;
                } else {
                    seg.push(old[i]);
                    i += 1;
                }
            }
            st.words[w] = seg;
            st.account(w, 1);
        }
    }
    WordPieceModel::from_tokens(vocab)
}
