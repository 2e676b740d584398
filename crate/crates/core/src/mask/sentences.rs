use super::{MaskToken, MaskedDocument};

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct MaskedSentence {
    pub text: String,
    pub doc_position: usize,
}

/// Splits a masked document into sentences.
///
/// Every line is split on `". "`, `"! "` and `"? "` with the punctuation kept;
/// header lines (starting with `#`) stay whole. List items end up as their own
/// sentences because they sit on their own lines.
pub fn split_sentences(doc: &MaskedDocument) -> Vec<MaskedSentence> {
    let mut out = Vec::new();
    let push = |s: &str, out: &mut Vec<MaskedSentence>| {
        let s = s.trim();
        if !s.is_empty() {
            let doc_position = out.len();
            out.push(MaskedSentence {
                text: s.to_string(),
                doc_position,
            });
        }
    };
    for line in doc.text.split('\n') {
        let line = line.trim();
        if line.starts_with('#') {
            push(line, &mut out);
            continue;
        }
        let mut start = 0;
        let bytes = line.as_bytes();
        for i in 0..bytes.len().saturating_sub(1) {
            if matches!(bytes[i], b'.' | b'!' | b'?') && bytes[i + 1].is_ascii_whitespace() {
                push(&line[start..=i], &mut out);
                start = i + 1;
            }
        }
        push(&line[start..], &mut out);
    }
    out
}

/// Whitespace-separated words with at least one alphabetic character, mask
/// tokens excluded.
pub fn alphabetic_word_count(sentence: &str) -> usize {
    sentence
        .split_whitespace()
        .filter(|word| {
            let mut w = word.to_string();
            for t in MaskToken::ALL {
                w = w.replace(t.surface(), " ");
            }
            w.chars().any(char::is_alphabetic)
        })
        .count()
}
