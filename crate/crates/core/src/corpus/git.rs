//! Local replacement for API harvesting: walk cloned repositories with the
//! `git` executable.
//!
//! Commands used per repository:
//! - `git rev-list --count HEAD` for the commit count,
//! - `git log --reverse --name-only --format=...` for the chronological
//!   history with changed paths,
//! - `git cat-file blob <rev>:<path>` for README content before and after a
//!   candidate commit.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::process::Command;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{
    harvest_repo, is_root_readme, is_simplification_commit, repo_passes_filters, sort_pairs,
    CommitEvent, DocumentPair, KeywordSet, RepoFilters, RepoMeta,
};
use crate::error::{Error, Result};

/// Optional sidecar at the root of the scanned directory carrying the
/// repository attributes `git` cannot know (stars, forks, fork status).
pub const REPO_META_FILE: &str = "repo_meta.jsonl";

/// One line of [`REPO_META_FILE`].
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RepoMetaFile {
    pub repo_id: String,
    #[serde(default)]
    pub stars: u64,
    #[serde(default)]
    pub forks: u64,
    #[serde(default)]
    pub is_fork: bool,
    #[serde(default)]
    pub language: Option<String>,
}

const RECORD_SEP: char = '\u{1e}';
const FIELD_SEP: char = '\u{1f}';
const BODY_END: char = '\u{1d}';

fn git(repo: &Path, args: &[&str]) -> Result<Vec<u8>> {
    let out = Command::new("git")
        .arg("-C")
        .arg(repo)
        .args(["-c", "core.quotepath=off"])
        .args(args)
        .output()
        .map_err(|e| Error::Git(format!("failed to run git in {}: {e}", repo.display())))?;
    if !out.status.success() {
        return Err(Error::Git(format!(
            "git {} failed in {}: {}",
            args.join(" "),
            repo.display(),
            String::from_utf8_lossy(&out.stderr).trim()
        )));
    }
    Ok(out.stdout)
}

fn ensure_git_available() -> Result<()> {
    match Command::new("git").arg("--version").output() {
        Ok(o) if o.status.success() => Ok(()),
        _ => Err(Error::Git("the `git` executable is not available".into())),
    }
}

struct RawCommit {
    sha: String,
    timestamp: i64,
    message: String,
    paths: Vec<String>,
}

fn parse_log(text: &str) -> Result<Vec<RawCommit>> {
    let mut commits = Vec::new();
    for record in text.split(RECORD_SEP).filter(|r| !r.trim().is_empty()) {
        let (head, paths) = record
            .split_once(BODY_END)
            .ok_or_else(|| Error::Git("malformed log record".into()))?;
        let mut fields = head.splitn(3, FIELD_SEP);
        let sha = fields.next().unwrap_or_default().trim().to_string();
        let timestamp = fields
            .next()
            .and_then(|t| t.trim().parse::<i64>().ok())
            .ok_or_else(|| Error::Git(format!("bad timestamp in record for {sha}")))?;
        let message = fields.next().unwrap_or_default().trim_end().to_string();
        let paths = paths
            .lines()
            .map(str::trim)
            .filter(|l| !l.is_empty())
            .map(String::from)
            .collect();
        commits.push(RawCommit {
            sha,
            timestamp,
            message,
            paths,
        });
    }
    Ok(commits)
}

fn blob(repo: &Path, rev: &str, path: &str) -> Option<String> {
    git(repo, &["cat-file", "blob", &format!("{rev}:{path}")])
        .ok()
        .map(|b| String::from_utf8_lossy(&b).into_owned())
}

/// Chronological history of a repository with root README content attached
/// to every commit that could qualify.
fn read_history(repo: &Path, keywords: &KeywordSet) -> Result<Vec<CommitEvent>> {
    let format = format!("--format={RECORD_SEP}%H{FIELD_SEP}%ct{FIELD_SEP}%B{BODY_END}");
    let raw = git(repo, &["log", "--reverse", "--name-only", "--no-renames", &format])?;
    let commits = parse_log(&String::from_utf8_lossy(&raw))?;
    Ok(commits
        .into_iter()
        .map(|c| {
            let mut event = CommitEvent {
                sha: c.sha,
                message: c.message,
                changed_paths: c.paths,
                readme_before: None,
                readme_after: None,
                timestamp: c.timestamp,
            };
            if is_simplification_commit(&event, keywords) {
                if let Some(path) = event.changed_paths.iter().find(|p| is_root_readme(p)) {
                    event.readme_before = blob(repo, &format!("{}^", event.sha), path);
                    event.readme_after = blob(repo, &event.sha, path);
                }
            }
            event
        })
        .collect())
}

fn scan_repo(
    repo: &Path,
    meta_file: Option<&RepoMetaFile>,
    keywords: &KeywordSet,
    filters: RepoFilters,
) -> Result<Vec<DocumentPair>> {
    let repo_id = repo
        .file_name()
        .map(|n| n.to_string_lossy().into_owned())
        .unwrap_or_default();
    let count = String::from_utf8_lossy(&git(repo, &["rev-list", "--count", "HEAD"])?)
        .trim()
        .parse::<u64>()
        .map_err(|e| Error::Git(format!("bad commit count for {repo_id}: {e}")))?;
    let meta = RepoMeta {
        repo_id: meta_file.map(|m| m.repo_id.clone()).unwrap_or(repo_id),
        stars: meta_file.map_or(0, |m| m.stars),
        forks: meta_file.map_or(0, |m| m.forks),
        commit_count: count,
        is_fork: meta_file.is_some_and(|m| m.is_fork),
        language: meta_file.and_then(|m| m.language.clone()),
    };
    if !repo_passes_filters(&meta, filters) {
        return Ok(Vec::new());
    }
    let history = read_history(repo, keywords)?;
    Ok(harvest_repo(&meta, &history, keywords, filters))
}

fn load_meta(dir: &Path) -> Result<BTreeMap<String, RepoMetaFile>> {
    let path = dir.join(REPO_META_FILE);
    if !path.exists() {
        return Ok(BTreeMap::new());
    }
    let rows: Vec<RepoMetaFile> = crate::jsonl::read_jsonl(&path)?;
    Ok(rows.into_iter().map(|r| (r.repo_id.clone(), r)).collect())
}

/// Harvests every repository found directly under `dir`.
///
/// Repository attributes come from [`REPO_META_FILE`] when present;
/// repositories missing from it count as unstarred non-forks. Unreadable
/// repositories are skipped with a warning. Output is sorted by
/// `(repo_id, sha)`.
pub fn scan_git_directory(
    dir: &Path,
    keywords: &KeywordSet,
    filters: RepoFilters,
) -> Result<Vec<DocumentPair>> {
    ensure_git_available()?;
    let meta = load_meta(dir)?;
    let mut repos: Vec<PathBuf> = std::fs::read_dir(dir)
        .map_err(|e| Error::io(dir, e))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.join(".git").exists())
        .collect();
    repos.sort();

    let per_repo: Vec<Vec<DocumentPair>> = repos
        .par_iter()
        .map(|repo| {
            let name = repo
                .file_name()
                .map(|n| n.to_string_lossy().into_owned())
                .unwrap_or_default();
            match scan_repo(repo, meta.get(&name), keywords, filters) {
                Ok(pairs) => pairs,
                Err(e) => {
                    log::warn!("skipping repository {}: {e}", repo.display());
                    Vec::new()
                }
            }
        })
        .collect();
    let mut pairs: Vec<DocumentPair> = per_repo.into_iter().flatten().collect();
    sort_pairs(&mut pairs);
    Ok(pairs)
}
