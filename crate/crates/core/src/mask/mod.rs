//! Cleaning raw README text, masking context-dependent components, and
//! splitting documents into sentences.
//!
//! Masking replaces five kinds of components by atomic placeholder tokens:
//!
//! | component                 | token          |
//! |---------------------------|----------------|
//! | inline code               | `<code_small>` |
//! | fenced / indented code    | `<code_large>` |
//! | path of file or directory | `<file>`       |
//! | markdown or HTML table    | `<table>`      |
//! | hyperlink target, URL     | `<url>`        |
//!
//! Every replacement is recorded as a [`Span`], so the cleaned document can be
//! rebuilt from the masked one with [`MaskedDocument::reconstruct`].

mod blocks;
mod clean;
mod inline;
mod sentences;

use serde::{Deserialize, Serialize};

pub use clean::{clean, is_emoji};
pub use sentences::{alphabetic_word_count, split_sentences, MaskedSentence};

/// The five atomic placeholder tokens.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum MaskToken {
    #[serde(rename = "<code_small>")]
    CodeSmall,
    #[serde(rename = "<code_large>")]
    CodeLarge,
    #[serde(rename = "<file>")]
    File,
    #[serde(rename = "<table>")]
    Table,
    #[serde(rename = "<url>")]
    Url,
}

impl MaskToken {
    pub const ALL: [MaskToken; 5] = [
        MaskToken::CodeSmall,
        MaskToken::CodeLarge,
        MaskToken::File,
        MaskToken::Table,
        MaskToken::Url,
    ];

    pub fn surface(self) -> &'static str {
        match self {
            MaskToken::CodeSmall => "<code_small>",
            MaskToken::CodeLarge => "<code_large>",
            MaskToken::File => "<file>",
            MaskToken::Table => "<table>",
            MaskToken::Url => "<url>",
        }
    }

    /// The token whose surface form starts `s`, if any.
    pub fn at_start(s: &str) -> Option<MaskToken> {
        Self::ALL.into_iter().find(|t| s.starts_with(t.surface()))
    }
}

impl std::fmt::Display for MaskToken {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.surface())
    }
}

/// One replaced component. `char_offset` is the character index of the token
/// inside the masked text.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Span {
    pub token: MaskToken,
    pub original: String,
    pub char_offset: usize,
}

#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct MaskedDocument {
    pub text: String,
    pub spans: Vec<Span>,
}

impl MaskedDocument {
    /// Rebuilds the pre-mask text by substituting every span's original.
    pub fn reconstruct(&self) -> String {
        let chars: Vec<char> = self.text.chars().collect();
        let mut out = String::with_capacity(self.text.len());
        let mut pos = 0;
        for span in &self.spans {
            out.extend(&chars[pos..span.char_offset]);
            out.push_str(&span.original);
            pos = span.char_offset + span.token.surface().chars().count();
        }
        out.extend(&chars[pos..]);
        out
    }

    /// Number of mask-token occurrences in the text.
    pub fn token_occurrences(&self) -> usize {
        let mut n = 0;
        let mut rest = self.text.as_str();
        while let Some(idx) = rest.find('<') {
            rest = &rest[idx..];
            match MaskToken::at_start(rest) {
                Some(t) => {
                    n += 1;
                    rest = &rest[t.surface().len()..];
                }
                None => rest = &rest[1..],
            }
        }
        n
    }
}

/// A masked text fragment under construction.
#[derive(Debug, Clone, PartialEq, Eq)]
pub(crate) enum Piece {
    Text(String),
    Token(MaskToken, String),
}

/// Masks a cleaned markdown document.
///
/// Block components (fenced and indented code, pipe and HTML tables) are
/// replaced line-wise first; inline code, link targets, bare URLs and file
/// paths are replaced within the remaining lines. Mask tokens already present
/// in the input are kept and recorded with themselves as original, which makes
/// masking idempotent.
pub fn mask(markdown: &str) -> MaskedDocument {
    let lines: Vec<&str> = markdown.split('\n').collect();
    let mut pieces = Vec::new();
    for (i, block) in blocks::segment(&lines).into_iter().enumerate() {
        if i > 0 {
            pieces.push(Piece::Text("\n".into()));
        }
        match block {
            blocks::Block::Token(token, original) => pieces.push(Piece::Token(token, original)),
            blocks::Block::Line(line) => inline::scan(line, &mut pieces),
        }
    }
    assemble(pieces)
}

fn assemble(pieces: Vec<Piece>) -> MaskedDocument {
    let mut doc = MaskedDocument::default();
    let mut offset = 0;
    for piece in pieces {
        match piece {
            Piece::Text(t) => {
                offset += t.chars().count();
                doc.text.push_str(&t);
            }
            Piece::Token(token, original) => {
                doc.spans.push(Span {
                    token,
                    original,
                    char_offset: offset,
                });
                doc.text.push_str(token.surface());
                offset += token.surface().chars().count();
            }
        }
    }
    doc
}

/// `masked_docs.jsonl` record: one side of one document pair.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct MaskedDocRecord {
    pub repo_id: String,
    pub sha: String,
    pub side: Side,
    pub sentences: Vec<String>,
    pub spans: Vec<(MaskToken, String, usize)>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Side {
    Difficult,
    Simple,
}

/// Cleans, masks and splits one README.
pub fn preprocess_document(raw: &str) -> (MaskedDocument, Vec<MaskedSentence>) {
    let doc = mask(&clean(raw));
    let sentences = split_sentences(&doc);
    (doc, sentences)
}

/// Turns harvested pairs into `masked_docs.jsonl` records, difficult side first.
pub fn preprocess_pairs(pairs: &[crate::corpus::DocumentPair]) -> Vec<MaskedDocRecord> {
    use rayon::prelude::*;
    pairs
        .par_iter()
        .flat_map_iter(|p| {
            [(Side::Difficult, &p.difficult_doc), (Side::Simple, &p.simple_doc)]
                .into_iter()
                .map(|(side, raw)| {
                    let (doc, sentences) = preprocess_document(raw);
                    MaskedDocRecord {
                        repo_id: p.repo_id.clone(),
                        sha: p.sha.clone(),
                        side,
                        sentences: sentences.into_iter().map(|s| s.text).collect(),
                        spans: doc
                            .spans
                            .into_iter()
                            .map(|s| (s.token, s.original, s.char_offset))
                            .collect(),
                    }
                })
                .collect::<Vec<_>>()
        })
        .collect()
}
