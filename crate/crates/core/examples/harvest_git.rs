//! Builds the twenty-repository git fixture in a temporary directory and
//! harvests README simplification pairs from it.

use rsimplify::corpus::{scan_git_directory, KeywordSet, RepoFilters};
use rsimplify::synth::build_git_fixture;

fn main() -> rsimplify::Result<()> {
    let dir = std::env::temp_dir().join(format!("rsimplify-harvest-{}", std::process::id()));
    let repos = build_git_fixture(&dir)?;
    println!("built {} repositories under {}", repos.len(), dir.display());
    let pairs = scan_git_directory(&dir, &KeywordSet::default(), RepoFilters::default())?;
    for p in &pairs {
        println!("{} {} {:?} {:?}", p.repo_id, &p.sha[..10], p.commit_message, p.matched_keywords);
    }
    println!("{} document pairs", pairs.len());
    std::fs::remove_dir_all(&dir).ok();
    Ok(())
}
