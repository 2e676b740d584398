//! A deterministic set of twenty small git repositories whose READMEs are
//! simplified by some commits, for end-to-end runs of the harvester.
//!
//! Repositories `proj00`..`proj14` pass the repository filter and carry three
//! README simplification commits each (only the first and last should be
//! harvested). `proj15` is a fork, `proj16` has too few stars, `proj17` too
//! few commits, `proj18` never simplifies its README and `proj19` has one
//! qualifying commit plus one that also touches code.

use std::io::Write;
use std::path::Path;
use std::process::{Command, Stdio};

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::align::{AlignedPair, Split};
use crate::corpus::{RepoMetaFile, REPO_META_FILE};
use crate::error::{Error, Result};

const TOPICS: [&str; 20] = [
    "parser", "server", "logging", "image", "audio", "network", "database", "testing", "graph", "text", "math",
    "cache", "search", "build", "crypto", "config", "queue", "plot", "json", "font",
];

/// Extra topics for the pretraining corpus, disjoint from the repositories'.
const PRETRAIN_TOPICS: [&str; 12] = [
    "video", "shell", "editor", "compiler", "metrics", "storage", "scheduler", "archive", "markdown", "sensor",
    "payment", "weather",
];

/// `(regular, simple)` sentence templates; `{Name}`, `{name}` and `{topic}`
/// are substituted per repository. Three groups of four, one group per
/// simplification pass.
const SENTENCES: [(&str, &str); 12] = [
    (
        "{Name} is a lightweight {topic} toolkit that was originally written in order to replace several older internal scripts.",
        "{Name} is a lightweight {topic} toolkit that replaces several older scripts.",
    ),
    (
        "It is primarily intended to be utilized by developers who need to process large {topic} files in a reproducible manner.",
        "It is meant for developers who need to process large {topic} files reproducibly.",
    ),
    (
        "The project is maintained by volunteers (most of whom work on it in their spare time) and welcomes contributions.",
        "The project is maintained by volunteers and welcomes contributions.",
    ),
    (
        "Please note that prior to installing {Name} you will need to ensure that a recent Rust toolchain is available on your system.",
        "Before installing {Name}, make sure a recent Rust toolchain is available on your system.",
    ),
    (
        "Installation can be performed by means of the following command, which downloads and compiles all required dependencies.",
        "Install it with the following command, which downloads and compiles all dependencies.",
    ),
    (
        "Subsequently, the configuration file located at config/{name}.toml should be modified in accordance with your requirements.",
        "Then edit the configuration file at config/{name}.toml to fit your requirements.",
    ),
    (
        "In the event that the build fails, it is advisable to consult the troubleshooting section of the documentation at https://docs.example.org/{name}.",
        "If the build fails, see the troubleshooting section of the documentation at https://docs.example.org/{name}.",
    ),
    (
        "The command line interface accepts a considerable number of options, all of which are described in detail by running `{name} --help`.",
        "The command line interface accepts many options, all of which are described by running `{name} --help`.",
    ),
    (
        "Internally, {Name} makes use of a streaming parser in order to keep the memory footprint as low as possible at all times.",
        "Internally, {Name} uses a streaming parser to keep the memory footprint low.",
    ),
    (
        "Results are written to the output directory, which by default is set to out/ unless otherwise specified by the user.",
        "Results are written to the output directory, which is out/ by default.",
    ),
    (
        "Bug reports and feature requests should be submitted via the issue tracker, where they will be reviewed by the maintainers in due course.",
        "Report bugs and request features on the issue tracker, where the maintainers will review them.",
    ),
    (
        "The software is distributed under the terms of the MIT license, a copy of which can be found in the LICENSE file.",
        "The software is distributed under the MIT license, which you can find in the LICENSE file.",
    ),
];

const PASS_MESSAGES: [&str; 3] = [
    "Simplify the introduction",
    "Clarify the installation notes",
    "Explain usage details more clearly",
];

fn fill(template: &str, name: &str, topic: &str) -> String {
    let mut cap = name.to_string();
    if let Some(first) = cap.get_mut(0..1) {
        first.make_ascii_uppercase();
    }
    template
        .replace("{Name}", &cap)
        .replace("{name}", name)
        .replace("{topic}", topic)
}

/// README text after `passes` simplification passes.
fn readme(name: &str, topic: &str, passes: usize, version: usize) -> String {
    let s = |k: usize| {
        let (regular, simple) = SENTENCES[k];
        fill(if k / 4 < passes { simple } else { regular }, name, topic)
    };
    let mut out = Vec::new();
    out.push(fill("# {Name}", name, topic));
    out.push(String::new());
    out.push(fill(
        "[![build](https://ci.example.org/{name}.svg)](https://ci.example.org/{name})",
        name,
        topic,
    ));
    out.push(String::new());
    out.push(format!("{} {} {}", s(0), s(1), s(2)));
    out.push(s(3));
    out.push(String::new());
    out.push("## Installation".into());
    out.push(String::new());
    out.push(s(4));
    out.push(String::new());
    out.push("```sh".into());
    out.push(fill("cargo install {name}", name, topic));
    out.push("```".into());
    out.push(String::new());
    out.push(format!("{} {}", s(5), s(6)));
    out.push(String::new());
    out.push("## Usage".into());
    out.push(String::new());
    out.push(format!("{} {}", s(7), s(8)));
    out.push(String::new());
    out.push("| option | meaning |".into());
    out.push("|--------|---------|".into());
    out.push("| `-v` | verbose output |".into());
    out.push("| `-q` | quiet mode |".into());
    out.push(String::new());
    out.push(format!("{} {}", s(9), s(10)));
    out.push(String::new());
    out.push("## License".into());
    out.push(String::new());
    out.push(s(11));
    out.push(String::new());
    out.push(format!("Current version: 0.{version}.0"));
    out.push(String::new());
    out.join("\n")
}

/// Description of one generated repository.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FixtureRepo {
    pub name: String,
    pub meta: RepoMetaFile,
    pub readme_path: String,
    pub commits: usize,
    /// Messages of the qualifying simplification commits, oldest first.
    pub qualifying: Vec<String>,
    /// Whether the repository passes the default repository filter.
    pub passes_filters: bool,
}

enum Change {
    Readme(String),
    Code(String),
    Both(String, String),
}

struct Commit {
    message: String,
    change: Change,
}

fn plan(index: usize) -> (FixtureRepo, Vec<Commit>) {
    let name = format!("proj{index:02}");
    let topic = TOPICS[index];
    let commits = if index == 17 { 50 } else { 120 };
    let readme_path = if index == 5 { "Readme.markdown" } else { "README.md" }.to_string();
    let passes_at: Vec<usize> = match index {
        18 => vec![],
        19 => vec![commits / 2],
        _ => vec![commits / 4, commits / 2, 3 * commits / 4],
    };
    let code = |c: usize| format!("fn main() {{\n    println!(\"{name} build {c}\");\n}}\n");

    let mut passes = 0;
    let mut version = 1;
    let mut list = vec![Commit {
        message: "Initial commit".into(),
        change: Change::Both(readme(&name, topic, 0, version), code(0)),
    }];
    let mut qualifying = Vec::new();
    for c in 1..commits {
        if passes_at.contains(&c) {
            let message = PASS_MESSAGES[passes].to_string();
            passes += 1;
            qualifying.push(message.clone());
            list.push(Commit {
                message,
                change: Change::Readme(readme(&name, topic, passes, version)),
            });
        } else if index == 19 && c == commits / 4 {
            // keyword present but code changes too, so it does not qualify
            passes += 1;
            list.push(Commit {
                message: "Clarify the introduction and fix a typo in main".into(),
                change: Change::Both(readme(&name, topic, passes, version), code(c)),
            });
        } else if index == 18 && c % 30 == 0 {
            version += 1;
            list.push(Commit {
                message: format!("Update README for release 0.{version}.0"),
                change: Change::Readme(readme(&name, topic, 0, version)),
            });
        } else if c % 17 == 0 {
            version += 1;
            list.push(Commit {
                message: format!("Bump version to 0.{version}.0"),
                change: Change::Readme(readme(&name, topic, passes, version)),
            });
        } else {
            let verb = ["Add feature", "Fix issue", "Refactor module"][c % 3];
            list.push(Commit {
                message: format!("{verb} {c}"),
                change: Change::Code(code(c)),
            });
        }
    }
    let meta = RepoMetaFile {
        repo_id: name.clone(),
        stars: if index == 16 { 5 } else { 10 + 7 * index as u64 },
        forks: index as u64 % 4,
        is_fork: index == 15,
        language: Some("Rust".into()),
    };
    let passes_filters = !meta.is_fork && meta.stars >= 10 && commits >= 100;
    (
        FixtureRepo {
            name,
            meta,
            readme_path,
            commits,
            qualifying,
            passes_filters,
        },
        list,
    )
}

fn fast_import_stream(repo: &FixtureRepo, commits: &[Commit], base_time: i64) -> Vec<u8> {
    let mut s = Vec::new();
    let data = |s: &mut Vec<u8>, text: &str| {
        s.extend(format!("data {}\n", text.len()).as_bytes());
        s.extend(text.as_bytes());
        s.push(b'\n');
    };
    for (k, c) in commits.iter().enumerate() {
        s.extend(b"commit refs/heads/master\n");
        s.extend(format!("mark :{}\n", k + 1).as_bytes());
        s.extend(format!("committer Fixture <fixture@example.org> {} +0000\n", base_time + 600 * k as i64).as_bytes());
        data(&mut s, &c.message);
        if k > 0 {
            s.extend(format!("from :{k}\n").as_bytes());
        }
        let mut modify = |path: &str, text: &str| {
            s.extend(format!("M 100644 inline {path}\n").as_bytes());
            data(&mut s, text);
        };
        match &c.change {
            Change::Readme(r) => modify(&repo.readme_path, r),
            Change::Code(code) => modify("src/main.rs", code),
            Change::Both(r, code) => {
                modify(&repo.readme_path, r);
                modify("src/main.rs", code);
            }
        }
        s.push(b'\n');
    }
    s
}

fn run_git(dir: &Path, args: &[&str], stdin: Option<&[u8]>) -> Result<()> {
    let mut child = Command::new("git")
        .arg("-C")
        .arg(dir)
        .args(args)
        .env("GIT_CONFIG_NOSYSTEM", "1")
        .stdin(if stdin.is_some() { Stdio::piped() } else { Stdio::null() })
        .stdout(Stdio::null())
        .stderr(Stdio::piped())
        .spawn()
        .map_err(|e| Error::Git(format!("failed to run git: {e}")))?;
    if let Some(bytes) = stdin {
        child
            .stdin
            .take()
            .expect("piped stdin")
            .write_all(bytes)
            .map_err(|e| Error::Git(format!("failed to feed git: {e}")))?;
    }
    let out = child
        .wait_with_output()
        .map_err(|e| Error::Git(format!("git did not finish: {e}")))?;
    if !out.status.success() {
        return Err(Error::Git(format!(
            "git {} failed: {}",
            args.join(" "),
            String::from_utf8_lossy(&out.stderr).trim()
        )));
    }
    Ok(())
}

/// Creates the twenty repositories and `repo_meta.jsonl` under `dir`.
/// Commit dates and identities are fixed, so SHAs are identical on every
/// machine.
pub fn build_git_fixture(dir: &Path) -> Result<Vec<FixtureRepo>> {
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let mut repos = Vec::new();
    for index in 0..20 {
        let (repo, commits) = plan(index);
        let path = dir.join(&repo.name);
        if path.exists() {
            return Err(Error::InvalidInput(format!("{} already exists", path.display())));
        }
        std::fs::create_dir_all(&path).map_err(|e| Error::io(&path, e))?;
        run_git(&path, &["init", "-q", "--initial-branch=master"], None)?;
        let stream = fast_import_stream(&repo, &commits, 1_500_000_000 + 100_000 * index as i64);
        run_git(&path, &["fast-import", "--quiet"], Some(&stream))?;
        run_git(&path, &["reset", "-q", "--hard", "master"], None)?;
        repos.push(repo);
    }
    let meta: Vec<RepoMetaFile> = repos.iter().map(|r| r.meta.clone()).collect();
    crate::jsonl::write_jsonl(&meta, &dir.join(REPO_META_FILE))?;
    Ok(repos)
}

/// A README-style parallel corpus for pretraining, built from the same
/// rewrite templates with names and topics that no fixture repository uses.
/// Splits are assigned 80/10/10 by a seeded shuffle.
pub fn pretrain_pairs(n: usize, seed: u64) -> Vec<AlignedPair> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut pairs: Vec<AlignedPair> = (0..n)
        .map(|k| {
            let topic = PRETRAIN_TOPICS.choose(&mut rng).expect("nonempty");
            let name = format!("tool{}", k % 37);
            let (regular, simple) = SENTENCES.choose(&mut rng).expect("nonempty");
            AlignedPair {
                pair_id: format!("pretrain#{k}"),
                regular: vec![fill(regular, &name, topic)],
                simple: fill(simple, &name, topic),
                tfidf_distance: 0.0,
                bleu: 0.0,
                split: Split::Unassigned,
            }
        })
        .collect();
    let valid = n / 10;
    crate::align::split_dataset(&mut pairs, n - 2 * valid, valid, seed).expect("sizes fit");
    pairs
}
