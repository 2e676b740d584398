//! End-to-end run on the synthetic twenty-repository fixture with the
//! desk-scale configuration.
//!
//! Usage: `cargo run --example full_pipeline [OUT_DIR]`

use std::path::PathBuf;

use rsimplify::jsonl::write_jsonl;
use rsimplify::pipeline::{run_pipeline, PipelineConfig};
use rsimplify::synth::{build_git_fixture, pretrain_pairs};

fn main() -> anyhow::Result<()> {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let out: PathBuf = std::env::args()
        .nth(1)
        .map(PathBuf::from)
        .unwrap_or_else(|| std::env::temp_dir().join("rsimplify-full-pipeline"));
    let work = out.join("inputs");
    std::fs::create_dir_all(&work)?;
    if !work.join("repos").exists() {
        build_git_fixture(&work.join("repos"))?;
    }
    write_jsonl(&pretrain_pairs(500, 11), &work.join("pretrain.jsonl"))?;
    let config = work.join("desk.toml");
    std::fs::write(&config, include_str!("../fixtures/desk.toml"))?;
    let cfg = PipelineConfig::load(&config)?;

    let started = std::time::Instant::now();
    let manifest = run_pipeline(&cfg, &out.join("run"))?;
    println!(
        "{} stages in {:.1}s, artifacts under {}",
        manifest.stages.len(),
        started.elapsed().as_secs_f64(),
        out.join("run").display()
    );
    let bleu = std::fs::read_to_string(out.join("run/bleu.csv"))?;
    print!("{bleu}");
    Ok(())
}
