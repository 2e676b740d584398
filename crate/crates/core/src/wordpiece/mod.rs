//! WordPiece subword tokenizer.
//!
//! Words are split on whitespace, and every character that is neither
//! alphanumeric nor whitespace becomes a word of its own. Case is kept. The
//! special tokens (sentence bounds, unknown, and the five mask tokens) are
//! matched verbatim before splitting and never segmented. Word-internal pieces
//! carry the `##` continuation prefix.

mod train;

use std::collections::HashMap;
use std::path::Path;

use crate::error::{Error, Result};

pub use train::train;

pub const SOS: &str = "<sos>";
pub const EOS: &str = "<eos>";
pub const UNK: &str = "<UNK>";
pub const CONTINUATION: &str = "##";

/// Special tokens, in id order.
pub const SPECIALS: [&str; 8] = [
    SOS,
    EOS,
    UNK,
    "<code_small>",
    "<code_large>",
    "<file>",
    "<table>",
    "<url>",
];

pub const SOS_ID: usize = 0;
pub const EOS_ID: usize = 1;
pub const UNK_ID: usize = 2;

/// A pre-tokenized word.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Word<'a> {
    Special(&'a str),
    Plain(&'a str),
}

/// Splits text into words as described in the module docs.
pub fn pre_tokenize(text: &str) -> Vec<Word<'_>> {
    let mut out = Vec::new();
    let mut run_start: Option<usize> = None;
    let mut iter = text.char_indices().peekable();
    while let Some((i, c)) = iter.next() {
        if c == '<' {
            if let Some(s) = SPECIALS.iter().find(|s| text[i..].starts_with(**s)) {
                if let Some(st) = run_start.take() {
                    out.push(Word::Plain(&text[st..i]));
                }
                out.push(Word::Special(&text[i..i + s.len()]));
                while iter.peek().is_some_and(|&(j, _)| j < i + s.len()) {
                    iter.next();
                }
                continue;
            }
        }
        if c.is_alphanumeric() {
            run_start.get_or_insert(i);
            continue;
        }
        if let Some(st) = run_start.take() {
            out.push(Word::Plain(&text[st..i]));
        }
        if !c.is_whitespace() {
            out.push(Word::Plain(&text[i..i + c.len_utf8()]));
        }
    }
    if let Some(st) = run_start {
        out.push(Word::Plain(&text[st..]));
    }
    out
}

/// Pre-tokenized words joined by single spaces: the form `decode(encode(x))`
/// returns for in-vocabulary text.
pub fn normalize(text: &str) -> String {
    pre_tokenize(text)
        .iter()
        .map(|w| match w {
            Word::Special(s) | Word::Plain(s) => *s,
        })
        .collect::<Vec<_>>()
        .join(" ")
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct WordPieceModel {
    tokens: Vec<String>,
    token_to_id: HashMap<String, usize>,
    max_chars: usize,
}

impl WordPieceModel {
    /// Builds a model from tokens in id order; the specials must come first.
    pub fn from_tokens(tokens: Vec<String>) -> Result<Self> {
        if tokens.len() < SPECIALS.len() || tokens.iter().zip(SPECIALS).any(|(t, s)| t != s) {
            return Err(Error::InvalidInput(format!(
                "vocabulary must start with the special tokens {SPECIALS:?}"
            )));
        }
        let mut token_to_id = HashMap::with_capacity(tokens.len());
        for (i, t) in tokens.iter().enumerate() {
            if t.is_empty() || t.chars().any(char::is_whitespace) {
                return Err(Error::InvalidInput(format!("invalid vocabulary token {t:?} at id {i}")));
            }
            if token_to_id.insert(t.clone(), i).is_some() {
                return Err(Error::InvalidInput(format!("duplicate vocabulary token {t:?}")));
            }
        }
        let max_chars = tokens.iter().map(|t| t.chars().count()).max().unwrap_or(0);
        Ok(WordPieceModel {
            tokens,
            token_to_id,
            max_chars,
        })
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }

    pub fn tokens(&self) -> &[String] {
        &self.tokens
    }

    pub fn id(&self, token: &str) -> Option<usize> {
        self.token_to_id.get(token).copied()
    }

    pub fn token(&self, id: usize) -> Option<&str> {
        self.tokens.get(id).map(String::as_str)
    }

    fn encode_word(&self, word: &str, out: &mut Vec<usize>) {
        let chars: Vec<char> = word.chars().collect();
        let mut pieces = Vec::new();
        let mut start = 0;
        let mut buf = String::new();
        while start < chars.len() {
            let mut found = None;
            let mut end = chars.len().min(start + self.max_chars);
            while end > start {
                buf.clear();
                if start > 0 {
                    buf.push_str(CONTINUATION);
                }
                buf.extend(&chars[start..end]);
                if let Some(id) = self.id(&buf) {
                    found = Some(id);
                    break;
                }
                end -= 1;
            }
            match found {
                Some(id) => {
                    pieces.push(id);
                    start = end;
                }
                None => {
                    out.push(UNK_ID);
                    return;
                }
            }
        }
        out.extend(pieces);
    }

    /// Greedy longest-match-first encoding. A word that cannot be fully
    /// segmented becomes a single `<UNK>`.
    pub fn encode(&self, text: &str, add_bounds: bool) -> Vec<usize> {
        let mut out = Vec::new();
        if add_bounds {
            out.push(SOS_ID);
        }
        for w in pre_tokenize(text) {
            match w {
                Word::Special(s) => out.push(self.id(s).expect("specials are in every vocabulary")),
                Word::Plain(p) => self.encode_word(p, &mut out),
            }
        }
        if add_bounds {
            out.push(EOS_ID);
        }
        out
    }

    /// Joins pieces, gluing `##` pieces to their predecessor and dropping
    /// sentence bounds.
    pub fn decode(&self, ids: &[usize]) -> Result<String> {
        let mut out = String::new();
        for &id in ids {
            let t = self.token(id).ok_or(Error::TokenOutOfRange {
                id,
                vocab: self.len(),
            })?;
            if id == SOS_ID || id == EOS_ID {
                continue;
            }
            match t.strip_prefix(CONTINUATION) {
                Some(rest) if !rest.is_empty() => out.push_str(rest),
                _ => {
                    if !out.is_empty() {
                        out.push(' ');
                    }
                    out.push_str(t);
                }
            }
        }
        Ok(out)
    }

    /// Writes `vocab.txt`: one token per line, line number = id.
    pub fn save(&self, path: &Path) -> Result<()> {
        if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
            std::fs::create_dir_all(parent).map_err(|e| Error::io(parent, e))?;
        }
        let mut text = self.tokens.join("\n");
        text.push('\n');
        std::fs::write(path, text).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_tokens(text.lines().map(String::from).collect())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn model(extra: &[&str]) -> WordPieceModel {
        let tokens = SPECIALS.iter().chain(extra).map(|s| s.to_string()).collect();
        WordPieceModel::from_tokens(tokens).unwrap()
    }

    #[test]
    fn pre_tokenization() {
        let words = pre_tokenize("Run <code_small>, now!<url>x");
        assert_eq!(
            words,
            vec![
                Word::Plain("Run"),
                Word::Special("<code_small>"),
                Word::Plain(","),
                Word::Plain("now"),
                Word::Plain("!"),
                Word::Special("<url>"),
                Word::Plain("x"),
            ]
        );
        assert_eq!(normalize("  a,b  "), "a , b");
    }

    #[test]
    fn greedy_longest_match() {
        let m = model(&["h", "hu", "##g", "##gs", "##s"]);
        let ids = m.encode("hugs", false);
        assert_eq!(ids, vec![m.id("hu").unwrap(), m.id("##gs").unwrap()]);
        assert_eq!(m.decode(&ids).unwrap(), "hugs");
        assert_eq!(m.encode("hux", false), vec![UNK_ID]);
    }

    #[test]
    fn specials_are_atomic() {
        let m = model(&["a"]);
        for (i, s) in SPECIALS.iter().enumerate() {
            assert_eq!(m.encode(s, false), vec![i]);
        }
    }

    #[test]
    fn decode_cases() {
        let m = model(&["hi", "hu", "##gs"]);
        assert_eq!(m.decode(&[SOS_ID, m.id("hi").unwrap(), EOS_ID]).unwrap(), "hi");
        assert_eq!(m.decode(&[]).unwrap(), "");
        assert!(matches!(m.decode(&[99]), Err(Error::TokenOutOfRange { id: 99, .. })));
    }

    #[test]
    fn vocab_file_round_trip() {
        let m = model(&["a", "##b"]);
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("vocab.txt");
        m.save(&p).unwrap();
        assert_eq!(WordPieceModel::load(&p).unwrap(), m);
        std::fs::write(&p, "a\nb\n").unwrap();
        assert!(WordPieceModel::load(&p).is_err());
    }
}
