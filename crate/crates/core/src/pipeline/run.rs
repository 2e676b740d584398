//! Stage functions and the end-to-end run.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::config::{PipelineConfig, ScorerKind};
use crate::align::{
    align_problems, fit_record_tfidf, problems_from_records, split_dataset, AlignOutput, AlignedPair, FileScorer,
    SimilarityScorer, Split, TfidfScorer,
};
use crate::corpus::{keyword_match, load_pairs, scan_git_directory, store_pairs, DocumentPair, KeywordSet};
use crate::error::{Error, Result};
use crate::jsonl::{read_jsonl, write_jsonl};
use crate::mask::{preprocess_pairs, MaskedDocRecord};
use crate::metrics::{corpus_stats, CorpusStats};
use crate::nn::ModelConfig;
use crate::train::{
    encode_pairs, epoch_checkpoint, evaluate_bleu, finetune, generate_all, run_training, Checkpoint, EncodedPair,
    Trainer, TransferScheme,
};
use crate::wordpiece::{self, WordPieceModel};

/// Stage names in execution order.
pub const STAGES: [&str; 8] = [
    "harvest",
    "preprocess",
    "align",
    "stats",
    "train-tokenizer",
    "train",
    "generate",
    "bleu",
];

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

pub fn sha256_file(path: &Path) -> Result<String> {
    Ok(sha256_hex(&std::fs::read(path).map_err(|e| Error::io(path, e))?))
}

/// Content hash of a directory of repositories: every repository name with
/// its `HEAD` commit, plus the metadata sidecar when present.
pub fn hash_git_dir(dir: &Path) -> Result<String> {
    let mut names: Vec<PathBuf> = std::fs::read_dir(dir)
        .map_err(|e| Error::io(dir, e))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.join(".git").exists())
        .collect();
    names.sort();
    let mut h = Sha256::new();
    for repo in names {
        let out = std::process::Command::new("git")
            .arg("-C")
            .arg(&repo)
            .args(["rev-parse", "HEAD"])
            .output()
            .map_err(|e| Error::Git(format!("failed to run git: {e}")))?;
        h.update(repo.file_name().map(|n| n.to_string_lossy().into_owned()).unwrap_or_default());
        h.update(b"\0");
        h.update(&out.stdout);
    }
    let meta = dir.join(crate::corpus::REPO_META_FILE);
    if meta.exists() {
        h.update(std::fs::read(&meta).map_err(|e| Error::io(&meta, e))?);
    }
    Ok(hex::encode(h.finalize()))
}

/// Re-applies keyword and star filters to already harvested pairs. Commit
/// counts are not part of the record, so that filter cannot be re-applied.
pub fn refilter_pairs(pairs: Vec<DocumentPair>, keywords: &KeywordSet, min_stars: u64) -> Vec<DocumentPair> {
    pairs
        .into_iter()
        .filter_map(|mut p| {
            p.matched_keywords = keyword_match(&p.commit_message, keywords);
            (!p.matched_keywords.is_empty() && p.stars >= min_stars && p.difficult_doc != p.simple_doc).then_some(p)
        })
        .collect()
}

/// Harvest stage: scan `git_dir`, or re-filter an existing pairs file.
pub fn harvest(cfg: &PipelineConfig) -> Result<Vec<DocumentPair>> {
    let keywords = cfg.ingest.keywords()?;
    match (&cfg.ingest.git_dir, &cfg.ingest.pairs) {
        (Some(dir), None) => scan_git_directory(dir, &keywords, cfg.ingest.filters()),
        (None, Some(path)) => {
            let mut pairs = refilter_pairs(load_pairs(path)?, &keywords, cfg.ingest.min_stars);
            crate::corpus::sort_pairs(&mut pairs);
            Ok(pairs)
        }
        (Some(_), Some(_)) => Err(Error::Config("set only one of ingest.git_dir and ingest.pairs".into())),
        (None, None) => Err(Error::Config("no input: set ingest.git_dir or ingest.pairs".into())),
    }
}

/// Align stage: pair sentences, filter, and assign train/valid/test splits.
pub fn align(records: &[MaskedDocRecord], cfg: &PipelineConfig) -> Result<AlignOutput> {
    let model = fit_record_tfidf(records)?;
    let file_scorer;
    let tfidf_scorer;
    let scorer: &dyn SimilarityScorer = match cfg.align.scorer {
        ScorerKind::Tfidf => {
            tfidf_scorer = TfidfScorer::new(&model);
            &tfidf_scorer
        }
        ScorerKind::File => {
            let path = cfg
                .align
                .score_file
                .as_ref()
                .ok_or_else(|| Error::Config("align.score_file is required for the file scorer".into()))?;
            file_scorer = FileScorer::load(path)?;
            &file_scorer
        }
    };
    let problems = problems_from_records(records);
    let mut out = align_problems(&problems, &cfg.align.align_config(), scorer, &model)?;
    let (train, valid, _) = cfg.align.split_sizes(out.pairs.len())?;
    split_dataset(&mut out.pairs, train, valid, cfg.seed)?;
    Ok(out)
}

/// `(regular, simple)` texts of aligned pairs.
pub fn pair_texts<'a, I: IntoIterator<Item = &'a AlignedPair>>(pairs: I) -> Vec<(String, String)> {
    pairs.into_iter().map(|p| (p.regular_text(), p.simple.clone())).collect()
}

pub fn split_of(pairs: &[AlignedPair], split: Split) -> Vec<&AlignedPair> {
    pairs.iter().filter(|p| p.split == split).collect()
}

/// Every regular and simple sentence of the given corpora, for tokenizer
/// training.
pub fn tokenizer_corpus(corpora: &[&[AlignedPair]]) -> Vec<String> {
    corpora
        .iter()
        .flat_map(|c| c.iter())
        .flat_map(|p| p.regular.iter().cloned().chain(std::iter::once(p.simple.clone())))
        .collect()
}

/// Loads a parallel corpus in `aligned_pairs.jsonl` format, splitting it
/// when no split is recorded.
pub fn load_parallel(path: &Path, cfg: &PipelineConfig) -> Result<Vec<AlignedPair>> {
    let mut pairs: Vec<AlignedPair> = read_jsonl(path)?;
    if pairs.iter().all(|p| p.split == Split::Unassigned) {
        let (train, valid, _) = cfg.align.split_sizes(pairs.len())?;
        split_dataset(&mut pairs, train, valid, cfg.seed)?;
    }
    Ok(pairs)
}

/// One finished stage of a run.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct StageRecord {
    pub stage: String,
    /// Input name to SHA-256 of its content.
    pub inputs: BTreeMap<String, String>,
    /// Output path, relative to the run directory, to SHA-256.
    pub outputs: BTreeMap<String, String>,
}

/// `manifest.json`: what ran, on which inputs, producing what.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Manifest {
    pub seed: u64,
    pub config_sha256: String,
    pub stages: Vec<StageRecord>,
    pub last_good_stage: Option<String>,
    pub failed_stage: Option<String>,
    pub error: Option<String>,
    pub complete: bool,
}

pub const MANIFEST_FILE: &str = "manifest.json";

/// One row of `bleu.csv`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BleuRow {
    pub scheme: TransferScheme,
    pub epoch: usize,
    pub bleu_x100: f64,
}

pub fn bleu_csv(rows: &[BleuRow]) -> String {
    let mut out = String::from("scheme,epoch,bleu_x100\n");
    for r in rows {
        out.push_str(&format!("{},{},{:.4}\n", r.scheme, r.epoch, r.bleu_x100));
    }
    out
}

/// One row of `generations.jsonl`: the best checkpoint of every scheme on
/// one test pair.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Generation {
    pub pair_id: String,
    pub source: String,
    pub reference: String,
    pub outputs: BTreeMap<TransferScheme, String>,
}

struct Run<'a> {
    cfg: &'a PipelineConfig,
    dir: &'a Path,
    manifest: Manifest,
}

impl Run<'_> {
    fn path(&self, rel: &str) -> PathBuf {
        self.dir.join(rel)
    }

    fn hash_rel(&self, rel: &str) -> Result<(String, String)> {
        Ok((rel.to_string(), sha256_file(&self.path(rel))?))
    }

    fn write_manifest(&self) -> Result<()> {
        let path = self.path(MANIFEST_FILE);
        let mut text = serde_json::to_string_pretty(&self.manifest)?;
        text.push('\n');
        std::fs::write(&path, text).map_err(|e| Error::io(&path, e))
    }

    fn finish(&mut self, stage: &str, inputs: Vec<(String, String)>, outputs: &[&str]) -> Result<()> {
        let outputs = outputs.iter().map(|o| self.hash_rel(o)).collect::<Result<BTreeMap<_, _>>>()?;
        self.manifest.stages.push(StageRecord {
            stage: stage.to_string(),
            inputs: inputs.into_iter().collect(),
            outputs,
        });
        self.manifest.last_good_stage = Some(stage.to_string());
        self.write_manifest()
    }

    fn section_hash<T: Serialize>(name: &str, section: &T) -> Result<(String, String)> {
        Ok((format!("config.{name}"), sha256_hex(&serde_json::to_vec(section)?)))
    }

    fn rel(&self, path: &Path) -> String {
        path.strip_prefix(self.dir)
            .unwrap_or(path)
            .to_string_lossy()
            .replace('\\', "/")
    }
}

fn scheme_dir(scheme: TransferScheme) -> String {
    format!("runs/{}", scheme.name())
}

/// Runs every stage in order, writing artifacts and `manifest.json` under
/// `out_dir`. On failure the manifest records the last stage that finished
/// and the error, and the error is returned.
pub fn run_pipeline(cfg: &PipelineConfig, out_dir: &Path) -> Result<Manifest> {
    cfg.validate_run_inputs()?;
    std::fs::create_dir_all(out_dir).map_err(|e| Error::io(out_dir, e))?;
    let mut run = Run {
        cfg,
        dir: out_dir,
        manifest: Manifest {
            seed: cfg.seed,
            config_sha256: sha256_hex(&serde_json::to_vec(cfg)?),
            stages: Vec::new(),
            last_good_stage: None,
            failed_stage: None,
            error: None,
            complete: false,
        },
    };
    run.write_manifest()?;
    match run_stages(&mut run) {
        Ok(()) => {
            run.manifest.complete = true;
            run.write_manifest()?;
            Ok(run.manifest)
        }
        Err(e) => {
            let done = run.manifest.stages.len();
            run.manifest.failed_stage = STAGES.get(done).map(|s| s.to_string());
            run.manifest.error = Some(e.to_string());
            run.write_manifest()?;
            Err(e)
        }
    }
}

fn run_stages(run: &mut Run) -> Result<()> {
    let cfg = run.cfg;

    log::info!("harvest");
    let mut inputs = vec![Run::section_hash("ingest", &cfg.ingest)?];
    if let Some(dir) = &cfg.ingest.git_dir {
        inputs.push(("git_dir".into(), hash_git_dir(dir)?));
    }
    if let Some(p) = &cfg.ingest.pairs {
        inputs.push(("pairs".into(), sha256_file(p)?));
    }
    if let Some(p) = &cfg.ingest.keywords_path {
        inputs.push(("keywords".into(), sha256_file(p)?));
    }
    let pairs = harvest(cfg)?;
    log::info!("{} document pairs", pairs.len());
    store_pairs(&pairs, &run.path("pairs.jsonl"))?;
    run.finish("harvest", inputs, &["pairs.jsonl"])?;

    log::info!("preprocess");
    let inputs = vec![run.hash_rel("pairs.jsonl")?];
    let records = preprocess_pairs(&pairs);
    write_jsonl(&records, &run.path("masked.jsonl"))?;
    run.finish("preprocess", inputs, &["masked.jsonl"])?;

    log::info!("align");
    let mut inputs = vec![run.hash_rel("masked.jsonl")?, Run::section_hash("align", &cfg.align)?];
    if let Some(p) = &cfg.align.score_file {
        inputs.push(("score_file".into(), sha256_file(p)?));
    }
    inputs.push(("seed".into(), cfg.seed.to_string()));
    let aligned = align(&records, cfg)?;
    log::info!("{} aligned pairs; stage sizes {:?}", aligned.pairs.len(), aligned.counts);
    write_jsonl(&aligned.pairs, &run.path("aligned.jsonl"))?;
    std::fs::write(
        run.path("align_counts.json"),
        serde_json::to_string_pretty(&serde_json::json!({ "counts": aligned.counts, "anomaly": aligned.anomaly }))? + "\n",
    )
    .map_err(|e| Error::io(run.path("align_counts.json"), e))?;
    run.finish("align", inputs, &["aligned.jsonl", "align_counts.json"])?;
    let pairs = aligned.pairs;

    log::info!("stats");
    let inputs = vec![run.hash_rel("aligned.jsonl")?];
    let stats: CorpusStats = corpus_stats(
        &pairs.iter().map(|p| p.simple.as_str()).collect::<Vec<_>>(),
        &pairs.iter().map(|p| p.regular_text()).collect::<Vec<_>>(),
    )?;
    std::fs::write(run.path("stats.json"), serde_json::to_string_pretty(&stats)? + "\n")
        .map_err(|e| Error::io(run.path("stats.json"), e))?;
    run.finish("stats", inputs, &["stats.json"])?;

    log::info!("train-tokenizer");
    let needs_pretrain = cfg.train.transfer_schemes.iter().any(|s| *s != TransferScheme::FromScratch);
    let pretrain: Vec<AlignedPair> = match (&cfg.pretrain.pairs, needs_pretrain) {
        (Some(p), true) => load_parallel(p, cfg)?,
        _ => Vec::new(),
    };
    let mut inputs = vec![run.hash_rel("aligned.jsonl")?, Run::section_hash("tokenizer", &cfg.tokenizer)?];
    if let (Some(p), true) = (&cfg.pretrain.pairs, needs_pretrain) {
        inputs.push(("pretrain_pairs".into(), sha256_file(p)?));
    }
    let tok = wordpiece::train(&tokenizer_corpus(&[&pairs, &pretrain]), cfg.tokenizer.vocab_size)?;
    tok.save(&run.path("vocab.txt"))?;
    run.finish("train-tokenizer", inputs, &["vocab.txt"])?;

    log::info!("train");
    let model = ModelConfig {
        vocab_size: tok.len(),
        ..cfg.model
    };
    let enc = |ps: Vec<&AlignedPair>| -> Vec<EncodedPair> { encode_pairs(&tok, &pair_texts(ps), model.max_len) };
    let train = enc(split_of(&pairs, Split::Train));
    let valid = enc(split_of(&pairs, Split::Valid));
    let mut inputs = vec![
        run.hash_rel("aligned.jsonl")?,
        run.hash_rel("vocab.txt")?,
        Run::section_hash("model", &cfg.model)?,
        Run::section_hash("train", &cfg.train)?,
        Run::section_hash("pretrain", &cfg.pretrain)?,
        ("seed".into(), cfg.seed.to_string()),
    ];
    let mut outputs: Vec<String> = Vec::new();
    let pretrain_dir = run.path("pretrain");
    if needs_pretrain {
        if let Some(p) = &cfg.pretrain.pairs {
            inputs.push(("pretrain_pairs".into(), sha256_file(p)?));
        }
        let mut pcfg = cfg.train.train_config(cfg.seed);
        pcfg.epochs = cfg.pretrain.epochs;
        pcfg.save_every = 0;
        pcfg.save_epochs = vec![cfg.pretrain.early_epoch, cfg.pretrain.mid_epoch];
        let ptrain = enc(split_of(&pretrain, Split::Train));
        let pvalid = enc(split_of(&pretrain, Split::Valid));
        log::info!("pretraining on {} pairs", ptrain.len());
        let out = run_training(Trainer::new(model, pcfg)?, &ptrain, &pvalid, Some(&pretrain_dir))?;
        outputs.extend(out.saved.iter().map(|(_, p)| run.rel(p)));
        outputs.extend(["pretrain/best.ckpt", "pretrain/last.ckpt", "pretrain/losscurve.csv"].map(String::from));
    }
    let mut snapshots: BTreeMap<TransferScheme, Vec<(usize, PathBuf)>> = BTreeMap::new();
    for &scheme in &cfg.train.transfer_schemes {
        log::info!("training scheme {scheme}");
        let base = match scheme.source(&pretrain_dir, cfg.pretrain.transfer_epochs()) {
            Some(p) => Some(Checkpoint::load(&p)?),
            None => None,
        };
        let dir = run.path(&scheme_dir(scheme));
        let out = finetune(
            base,
            model,
            tok.len(),
            cfg.train.train_config(cfg.seed),
            cfg.train.reset_optimizer,
            &train,
            &valid,
            Some(&dir),
        )?;
        outputs.extend(out.saved.iter().map(|(_, p)| run.rel(p)));
        for f in ["best.ckpt", "last.ckpt", "losscurve.csv"] {
            outputs.push(format!("{}/{f}", scheme_dir(scheme)));
        }
        snapshots.insert(scheme, out.saved);
    }
    let outs: Vec<&str> = outputs.iter().map(String::as_str).collect();
    run.finish("train", inputs, &outs)?;

    log::info!("generate");
    let test: Vec<&AlignedPair> = split_of(&pairs, Split::Test);
    let sources: Vec<String> = test.iter().map(|p| p.regular_text()).collect();
    let mut inputs = vec![run.hash_rel("aligned.jsonl")?, run.hash_rel("vocab.txt")?];
    let mut per_scheme: BTreeMap<TransferScheme, Vec<String>> = BTreeMap::new();
    for &scheme in &cfg.train.transfer_schemes {
        let rel = format!("{}/best.ckpt", scheme_dir(scheme));
        inputs.push(run.hash_rel(&rel)?);
        let ckpt = Checkpoint::load(&run.path(&rel))?;
        let outs = generate_all(&ckpt.model, &ckpt.params, &tok, &sources, cfg.train.beam_size, cfg.train.max_output_len)?;
        per_scheme.insert(scheme, outs);
    }
    let generations: Vec<Generation> = test
        .iter()
        .enumerate()
        .map(|(i, p)| Generation {
            pair_id: p.pair_id.clone(),
            source: p.regular_text(),
            reference: p.simple.clone(),
            outputs: per_scheme.iter().map(|(s, o)| (*s, o[i].clone())).collect(),
        })
        .collect();
    write_jsonl(&generations, &run.path("generations.jsonl"))?;
    run.finish("generate", inputs, &["generations.jsonl"])?;

    log::info!("bleu");
    let test_pairs = pair_texts(test.iter().copied());
    let mut inputs = vec![run.hash_rel("aligned.jsonl")?, run.hash_rel("vocab.txt")?];
    let mut rows = Vec::new();
    for (scheme, saved) in &snapshots {
        for (epoch, path) in saved {
            inputs.push(run.hash_rel(&run.rel(path))?);
            let ckpt = Checkpoint::load(path)?;
            let (score, _) = evaluate_bleu(
                &ckpt.model,
                &ckpt.params,
                &tok,
                &test_pairs,
                cfg.train.beam_size,
                cfg.train.max_output_len,
            )?;
            log::info!("{scheme} epoch {epoch}: BLEU {:.2}", score.x100);
            rows.push(BleuRow {
                scheme: *scheme,
                epoch: *epoch,
                bleu_x100: score.x100,
            });
        }
    }
    std::fs::write(run.path("bleu.csv"), bleu_csv(&rows)).map_err(|e| Error::io(run.path("bleu.csv"), e))?;
    run.finish("bleu", inputs, &["bleu.csv"])?;
    Ok(())
}

/// Loads a tokenizer and checkpoint pair, checking that they agree.
pub fn load_model(vocab: &Path, checkpoint: &Path) -> Result<(WordPieceModel, Checkpoint)> {
    let tok = WordPieceModel::load(vocab)?;
    let ckpt = Checkpoint::load(checkpoint)?;
    if ckpt.model.vocab_size != tok.len() {
        return Err(Error::Config(format!(
            "checkpoint vocabulary {} does not match {} tokens in {}",
            ckpt.model.vocab_size,
            tok.len(),
            vocab.display()
        )));
    }
    Ok((tok, ckpt))
}

/// Snapshot epochs present for a scheme directory, ascending.
pub fn snapshot_epochs(dir: &Path, max_epoch: usize) -> Vec<(usize, PathBuf)> {
    (0..=max_epoch)
        .map(|e| (e, epoch_checkpoint(dir, e)))
        .filter(|(_, p)| p.exists())
        .collect()
}
