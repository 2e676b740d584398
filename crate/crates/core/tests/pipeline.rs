use std::path::Path;

use rsimplify::corpus::{store_pairs, DocumentPair};
use rsimplify::pipeline::{run_pipeline, Manifest, PipelineConfig, MANIFEST_FILE, STAGES};

fn doc_pair(i: usize) -> DocumentPair {
    DocumentPair {
        repo_id: format!("r{i}"),
        sha: format!("{i:040x}"),
        matched_keywords: ["simplify".to_string()].into(),
        commit_message: "Simplify the readme".into(),
        language: None,
        forks: 0,
        stars: 100,
        difficult_doc: "The tool, which was written over many years, parses files quickly.".into(),
        simple_doc: "The tool parses files quickly.".into(),
    }
}

fn config_for(pairs: &Path, extra: &str) -> PipelineConfig {
    let text = format!(
        "seed = 3\n[ingest]\npairs = {:?}\n[train]\ntransfer_schemes = [\"from_scratch\"]\nepochs = 1\n{extra}",
        pairs.display().to_string()
    );
    PipelineConfig::from_toml(&text).unwrap()
}

#[test]
fn failed_stage_is_recorded_in_manifest() {
    let dir = tempfile::tempdir().unwrap();
    let pairs = dir.path().join("pairs.jsonl");
    store_pairs(&[doc_pair(0)], &pairs).unwrap();
    let out = dir.path().join("run");
    let err = run_pipeline(&config_for(&pairs, ""), &out).unwrap_err();
    let manifest: Manifest =
        serde_json::from_str(&std::fs::read_to_string(out.join(MANIFEST_FILE)).unwrap()).unwrap();
    assert!(!manifest.complete);
    assert_eq!(manifest.error.as_deref(), Some(err.to_string().as_str()));
    let done = manifest.stages.len();
    assert!(done < STAGES.len());
    assert_eq!(manifest.failed_stage.as_deref(), Some(STAGES[done]));
    assert_eq!(manifest.last_good_stage.as_deref(), done.checked_sub(1).map(|i| STAGES[i]));
    for (record, name) in manifest.stages.iter().zip(STAGES) {
        assert_eq!(record.stage, name);
        for file in record.outputs.keys() {
            assert!(out.join(file).exists(), "{file} listed but missing");
        }
    }
}

#[test]
fn invalid_config_fails_before_any_output() {
    let dir = tempfile::tempdir().unwrap();
    let pairs = dir.path().join("pairs.jsonl");
    store_pairs(&[doc_pair(0)], &pairs).unwrap();
    let text = format!("[ingest]\npairs = {:?}\n[align]\ntfidf_threshold = 1.5\n", pairs.display().to_string());
    assert!(PipelineConfig::from_toml(&text).and_then(|c| c.validate()).is_err());

    let cfg = config_for(&pairs, "");
    let mut both = cfg.clone();
    both.ingest.git_dir = Some(dir.path().to_path_buf());
    let out = dir.path().join("never");
    assert!(run_pipeline(&both, &out).is_err());
    assert!(!out.exists());

    let mut needs_pretrain = cfg;
    needs_pretrain.train.transfer_schemes = rsimplify::train::TransferScheme::ALL.to_vec();
    needs_pretrain.pretrain.pairs = None;
    assert!(run_pipeline(&needs_pretrain, &out).is_err());
    assert!(!out.exists());
}
