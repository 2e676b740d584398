use std::io::{Read, Write};
use std::path::Path;

use super::DocumentPair;
use crate::error::Result;
use crate::jsonl;

/// Loads `document_pairs.jsonl`.
pub fn load_pairs(path: &Path) -> Result<Vec<DocumentPair>> {
    jsonl::read_jsonl(path)
}

pub fn read_pairs<R: Read>(reader: R) -> Result<Vec<DocumentPair>> {
    jsonl::read_jsonl_from(reader, Path::new("<reader>"))
}

/// Writes `document_pairs.jsonl`, one object per line.
pub fn store_pairs(pairs: &[DocumentPair], path: &Path) -> Result<()> {
    jsonl::write_jsonl(pairs, path)
}

pub fn write_pairs<W: Write>(pairs: &[DocumentPair], writer: W) -> Result<()> {
    jsonl::write_jsonl_to(pairs, writer)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::error::Error;

    fn pair(i: usize) -> DocumentPair {
        DocumentPair {
            repo_id: format!("repo{i}"),
            sha: format!("{i:040x}"),
            matched_keywords: ["simplify".to_string()].into_iter().collect(),
            commit_message: "Simplify intro\n\nbody \"quoted\"".into(),
            language: if i % 2 == 0 { Some("Rust".into()) } else { None },
            forks: i as u64,
            stars: 10 + i as u64,
            difficult_doc: format!("# Title {i}\nLong text.\n"),
            simple_doc: format!("# Title {i}\nShort.\n"),
        }
    }

    #[test]
    fn round_trip_five_pairs() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("pairs.jsonl");
        let pairs: Vec<_> = (0..5).map(pair).collect();
        store_pairs(&pairs, &path).unwrap();
        assert_eq!(load_pairs(&path).unwrap(), pairs);
        let raw = std::fs::read_to_string(&path).unwrap();
        assert_eq!(raw.lines().count(), 5);
        assert!(raw.ends_with('\n'));
    }

    #[test]
    fn empty_file_is_empty_list() {
        assert!(read_pairs("".as_bytes()).unwrap().is_empty());
    }

    #[test]
    fn missing_field_is_named() {
        let mut v = serde_json::to_value(pair(0)).unwrap();
        v.as_object_mut().unwrap().remove("difficult_doc");
        let text = format!("{}\n{}\n", serde_json::to_string(&pair(1)).unwrap(), v);
        match read_pairs(text.as_bytes()) {
            Err(Error::MissingField { field, line }) => {
                assert_eq!(field, "difficult_doc");
                assert_eq!(line, 2);
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn malformed_line_reports_line_number() {
        let text = format!("{}\n{{not json\n", serde_json::to_string(&pair(1)).unwrap());
        match read_pairs(text.as_bytes()) {
            Err(Error::Parse { line, .. }) => assert_eq!(line, 2),
            other => panic!("unexpected {other:?}"),
        }
    }
}
