//! Harvesting document-level regular→simple README pairs from commit histories.
//!
//! A repository qualifies when it is not a fork and has enough stars and
//! commits. Within a qualifying repository, a commit is a simplification
//! instance when its message carries one of the simplification keywords and
//! it touches nothing but README files. Only the first and the last such
//! commit of every repository are kept.

mod git;
mod jsonl;

use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub use git::{scan_git_directory, RepoMetaFile, REPO_META_FILE};
pub use jsonl::{load_pairs, read_pairs, store_pairs, write_pairs};

/// The 22 keyword forms used to spot simplification commits.
pub const DEFAULT_KEYWORDS: [&str; 22] = [
    "simplification",
    "simplify",
    "simple",
    "simplicity",
    "reduction",
    "reduce",
    "clarification",
    "clarify",
    "clear",
    "clarity",
    "elucidation",
    "elucidate",
    "elucidative",
    "elucidatory",
    "explanation",
    "explain",
    "explanatory",
    "comprehension",
    "comprehend",
    "comprehensible",
    "ease",
    "easy",
];

/// Maximum number of characters an inflected word may add to a keyword.
pub const MAX_SUFFIX_LEN: usize = 3;

/// Repository-level attributes used by the repository filter.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RepoMeta {
    pub repo_id: String,
    pub stars: u64,
    pub forks: u64,
    pub commit_count: u64,
    pub is_fork: bool,
    pub language: Option<String>,
}

/// One commit together with the root README content around it.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CommitEvent {
    pub sha: String,
    pub message: String,
    pub changed_paths: Vec<String>,
    pub readme_before: Option<String>,
    pub readme_after: Option<String>,
    pub timestamp: i64,
}

/// A harvested regular→simple README pair.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DocumentPair {
    pub repo_id: String,
    pub sha: String,
    pub matched_keywords: BTreeSet<String>,
    pub commit_message: String,
    pub language: Option<String>,
    pub forks: u64,
    pub stars: u64,
    /// README before the commit.
    pub difficult_doc: String,
    /// README after the commit.
    pub simple_doc: String,
}

/// Ordered, duplicate-free list of lowercase keywords.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct KeywordSet {
    words: Vec<String>,
}

impl KeywordSet {
    pub fn new<I, S>(words: I) -> Result<Self>
    where
        I: IntoIterator<Item = S>,
        S: AsRef<str>,
    {
        let mut seen = BTreeSet::new();
        let mut out = Vec::new();
        for w in words {
            let w = w.as_ref().trim();
            if w.is_empty() {
                continue;
            }
            if w.chars().any(|c| !c.is_lowercase()) {
                return Err(Error::InvalidInput(format!(
                    "keyword {w:?} must consist of lowercase letters"
                )));
            }
            if !seen.insert(w.to_string()) {
                return Err(Error::InvalidInput(format!("duplicate keyword {w:?}")));
            }
            out.push(w.to_string());
        }
        if out.is_empty() {
            return Err(Error::InvalidInput("keyword set is empty".into()));
        }
        Ok(Self { words: out })
    }

    /// Reads one keyword per line; blank lines and `#` comments are skipped.
    pub fn from_file(path: &std::path::Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::new(
            text.lines()
                .map(str::trim)
                .filter(|l| !l.is_empty() && !l.starts_with('#')),
        )
    }

    pub fn words(&self) -> &[String] {
        &self.words
    }

    pub fn contains(&self, word: &str) -> bool {
        self.words.iter().any(|w| w == word)
    }
}

impl Default for KeywordSet {
    fn default() -> Self {
        Self {
            words: DEFAULT_KEYWORDS.iter().map(|s| s.to_string()).collect(),
        }
    }
}

/// Thresholds of the repository filter.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct RepoFilters {
    pub min_stars: u64,
    pub min_commits: u64,
}

impl Default for RepoFilters {
    fn default() -> Self {
        Self {
            min_stars: 10,
            min_commits: 100,
        }
    }
}

pub fn repo_passes_filters(meta: &RepoMeta, filters: RepoFilters) -> bool {
    !meta.is_fork && meta.stars >= filters.min_stars && meta.commit_count >= filters.min_commits
}

/// Keywords present in a commit message.
///
/// The message is lowercased and split on non-alphabetic characters. A word
/// matches keyword `k` when it equals `k` or extends it by at most
/// [`MAX_SUFFIX_LEN`] characters ("clarifying" matches "clarify").
pub fn keyword_match(message: &str, keywords: &KeywordSet) -> BTreeSet<String> {
    let lower = message.to_lowercase();
    let words: Vec<&str> = lower
        .split(|c: char| !c.is_alphabetic())
        .filter(|w| !w.is_empty())
        .collect();
    keywords
        .words()
        .iter()
        .filter(|k| {
            words.iter().any(|w| {
                w.starts_with(k.as_str()) && w.chars().count() - k.chars().count() <= MAX_SUFFIX_LEN
            })
        })
        .cloned()
        .collect()
}

/// True when the path's basename starts with "readme", ignoring case.
pub fn is_readme_path(path: &str) -> bool {
    let base = path.rsplit('/').next().unwrap_or(path);
    base.to_lowercase().starts_with("readme")
}

/// True for a README path at the repository root.
pub fn is_root_readme(path: &str) -> bool {
    !path.contains('/') && is_readme_path(path)
}

/// A commit whose message carries a keyword and which changes only README files.
///
/// Commits that change no paths at all (merges) never qualify.
pub fn is_simplification_commit(event: &CommitEvent, keywords: &KeywordSet) -> bool {
    !event.changed_paths.is_empty()
        && event.changed_paths.iter().all(|p| is_readme_path(p))
        && !keyword_match(&event.message, keywords).is_empty()
}

fn to_pair(meta: &RepoMeta, event: &CommitEvent, keywords: &KeywordSet) -> Option<DocumentPair> {
    let before = event.readme_before.as_ref()?;
    let after = event.readme_after.as_ref()?;
    if before == after {
        return None;
    }
    Some(DocumentPair {
        repo_id: meta.repo_id.clone(),
        sha: event.sha.clone(),
        matched_keywords: keyword_match(&event.message, keywords),
        commit_message: event.message.clone(),
        language: meta.language.clone(),
        forks: meta.forks,
        stars: meta.stars,
        difficult_doc: before.clone(),
        simple_doc: after.clone(),
    })
}

/// Pairs from the first and the last qualifying commit of a repository.
///
/// `history` must be chronological. Returns nothing when the repository
/// itself fails the filters.
pub fn harvest_repo(
    meta: &RepoMeta,
    history: &[CommitEvent],
    keywords: &KeywordSet,
    filters: RepoFilters,
) -> Vec<DocumentPair> {
    if !repo_passes_filters(meta, filters) {
        return Vec::new();
    }
    let qualifying: Vec<DocumentPair> = history
        .iter()
        .filter(|e| is_simplification_commit(e, keywords))
        .filter_map(|e| to_pair(meta, e, keywords))
        .collect();
    match qualifying.len() {
        0 => Vec::new(),
        1 => qualifying,
        n => {
            let mut it = qualifying.into_iter();
            let first = it.next().unwrap();
            let last = it.nth(n - 2).unwrap();
            vec![first, last]
        }
    }
}

/// Sorts pairs by `(repo_id, sha)`, the canonical output order.
pub fn sort_pairs(pairs: &mut [DocumentPair]) {
    pairs.sort_by(|a, b| (&a.repo_id, &a.sha).cmp(&(&b.repo_id, &b.sha)));
}

#[cfg(test)]
mod tests {
    use super::*;

    fn meta(is_fork: bool, stars: u64, commits: u64) -> RepoMeta {
        RepoMeta {
            repo_id: "r".into(),
            stars,
            forks: 0,
            commit_count: commits,
            is_fork,
            language: None,
        }
    }

    fn event(sha: &str, msg: &str, paths: &[&str], before: &str, after: &str) -> CommitEvent {
        CommitEvent {
            sha: sha.into(),
            message: msg.into(),
            changed_paths: paths.iter().map(|s| s.to_string()).collect(),
            readme_before: Some(before.into()),
            readme_after: Some(after.into()),
            timestamp: 0,
        }
    }

    #[test]
    fn default_keywords_are_valid() {
        let k = KeywordSet::default();
        assert_eq!(k.words().len(), 22);
        assert!(KeywordSet::new(DEFAULT_KEYWORDS).is_ok());
    }

    #[test]
    fn keyword_set_rejects_duplicates_and_uppercase() {
        assert!(KeywordSet::new(["clear", "clear"]).is_err());
        assert!(KeywordSet::new(["Clear"]).is_err());
        assert!(KeywordSet::new(Vec::<String>::new()).is_err());
    }

    #[test]
    fn repo_filter_boundaries() {
        let f = RepoFilters::default();
        assert!(repo_passes_filters(&meta(false, 10, 100), f));
        assert!(!repo_passes_filters(&meta(true, 1000, 1000), f));
        assert!(!repo_passes_filters(&meta(false, 9, 100), f));
        assert!(!repo_passes_filters(&meta(false, 10, 99), f));
    }

    #[test]
    fn keyword_examples() {
        let k = KeywordSet::default();
        let set = |v: &[&str]| v.iter().map(|s| s.to_string()).collect::<BTreeSet<_>>();
        assert_eq!(keyword_match("Simplify intro paragraph", &k), set(&["simplify"]));
        assert!(keyword_match("fix typo in tests", &k).is_empty());
        assert_eq!(keyword_match("Clarifying README a bit", &k), set(&["clarify"]));
        assert_eq!(
            keyword_match("Change link text to reduce confusion", &k),
            set(&["reduce"])
        );
        // four extra characters is beyond the suffix budget
        assert!(keyword_match("clearness", &k).is_empty());
        assert!(keyword_match("unclear wording", &k).is_empty());
    }

    #[test]
    fn readme_detection() {
        assert!(is_readme_path("README.md"));
        assert!(is_readme_path("docs/readme.rst"));
        assert!(is_readme_path("ReadMe"));
        assert!(!is_readme_path("src/main.c"));
        assert!(is_root_readme("README.md"));
        assert!(!is_root_readme("docs/README.md"));
    }

    #[test]
    fn simplification_commit_examples() {
        let k = KeywordSet::default();
        assert!(is_simplification_commit(&event("a", "Clarify README", &["README.md"], "x", "y"), &k));
        assert!(!is_simplification_commit(
            &event("a", "Clarify docs", &["README.md", "src/main.c"], "x", "y"),
            &k
        ));
        assert!(!is_simplification_commit(&event("a", "bump version", &["README.md"], "x", "y"), &k));
        assert!(!is_simplification_commit(&event("a", "Clarify", &[], "x", "y"), &k));
    }

    #[test]
    fn harvest_keeps_first_and_last() {
        let k = KeywordSet::default();
        let m = meta(false, 50, 200);
        let f = RepoFilters::default();
        let h = vec![
            event("c1", "simplify intro", &["README.md"], "a", "b"),
            event("c2", "unrelated", &["README.md"], "b", "c"),
            event("c3", "clarify usage", &["README.md"], "c", "d"),
            event("c4", "explain build", &["README.md"], "d", "e"),
        ];
        let out = harvest_repo(&m, &h, &k, f);
        assert_eq!(out.len(), 2);
        assert_eq!(out[0].sha, "c1");
        assert_eq!(out[1].sha, "c4");
        assert_eq!(out[0].difficult_doc, "a");
        assert_eq!(out[0].simple_doc, "b");

        let out = harvest_repo(&m, &h[..1], &k, f);
        assert_eq!(out.len(), 1);
        assert!(harvest_repo(&m, &h[1..2], &k, f).is_empty());
        assert!(harvest_repo(&meta(false, 50, 50), &h, &k, f).is_empty());
    }

    #[test]
    fn harvest_skips_unchanged_or_missing_documents() {
        let k = KeywordSet::default();
        let m = meta(false, 50, 200);
        let mut first = event("c1", "simplify", &["README.md"], "same", "same");
        let out = harvest_repo(&m, std::slice::from_ref(&first), &k, RepoFilters::default());
        assert!(out.is_empty());
        first.readme_before = None;
        first.readme_after = Some("x".into());
        assert!(harvest_repo(&m, &[first], &k, RepoFilters::default()).is_empty());
    }
}
