use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use clap::{Parser, Subcommand};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use rsimplify::align::{load_labeled, parse_grid, threshold_sweep, AlignedPair, Split};
use rsimplify::corpus::{load_pairs, store_pairs};
use rsimplify::jsonl::{read_jsonl, write_jsonl};
use rsimplify::mask::{preprocess_pairs, MaskedDocRecord};
use rsimplify::metrics::{corpus_stats, TfidfModel};
use rsimplify::nn::ModelConfig;
use rsimplify::pipeline::annotation::{analyze_annotations, export_annotation_batch, KeyItem, Rating};
use rsimplify::pipeline::{self, Generation, PipelineConfig, ScorerKind};
use rsimplify::train::{
    encode_pairs, evaluate_bleu, finetune, generate_all, loss_curve_csv, run_training, Checkpoint, Trainer,
};
use rsimplify::wordpiece::{self, WordPieceModel};

#[derive(Parser)]
#[command(name = "rsimplify", version, about = "README simplification corpus and model toolkit")]
struct Cli {
    /// TOML configuration; built-in defaults when omitted. RS_SEED overrides its seed.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Harvest README pairs from a directory of git repositories, or re-filter a pairs file.
    Harvest {
        #[arg(long, conflicts_with = "input")]
        git_dir: Option<PathBuf>,
        /// Re-filter an existing pairs file; commit counts are not recorded there.
        #[arg(long = "in")]
        input: Option<PathBuf>,
        #[arg(long)]
        keywords: Option<PathBuf>,
        #[arg(long)]
        min_stars: Option<u64>,
        #[arg(long)]
        min_commits: Option<u64>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Clean and mask document pairs and split them into sentences.
    Preprocess {
        #[arg(long = "in")]
        input: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Align and filter sentences, assigning train/valid/test splits.
    Align {
        #[arg(long = "in")]
        input: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, value_enum)]
        scorer: Option<ScorerArg>,
        #[arg(long)]
        score_file: Option<PathBuf>,
        #[arg(long)]
        window: Option<usize>,
        #[arg(long)]
        tfidf_threshold: Option<f64>,
        #[arg(long)]
        bleu_lo: Option<f64>,
        #[arg(long)]
        bleu_hi: Option<f64>,
        /// Per-stage counts as JSON.
        #[arg(long)]
        counts: Option<PathBuf>,
    },
    /// Precision/recall/F1/accuracy of the TF-IDF distance threshold on a labeled TSV.
    Sweep {
        #[arg(long)]
        labeled: PathBuf,
        /// start:stop:step
        #[arg(long, default_value = "0.1:0.9:0.05")]
        grid: String,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Length and vocabulary statistics of an aligned corpus.
    Stats {
        #[arg(long = "in")]
        input: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Train a WordPiece vocabulary on one or more aligned corpora.
    TrainTokenizer {
        #[arg(long = "in", required = true, value_delimiter = ',')]
        input: Vec<PathBuf>,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        vocab_size: Option<usize>,
    },
    /// Train a model from scratch, or resume a checkpoint.
    Train {
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        vocab: PathBuf,
        #[arg(long)]
        out_dir: PathBuf,
        #[arg(long)]
        epochs: Option<usize>,
        #[arg(long)]
        resume: Option<PathBuf>,
    },
    /// Continue training a pretrained checkpoint on new data.
    Finetune {
        /// Pretrained checkpoint; omit to train from scratch.
        #[arg(long)]
        base: Option<PathBuf>,
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        vocab: PathBuf,
        #[arg(long)]
        out_dir: PathBuf,
        #[arg(long)]
        epochs: Option<usize>,
        /// Start from zeroed Adam moments instead of the checkpoint's.
        #[arg(long)]
        reset_optimizer: bool,
    },
    /// Simplify sentences with beam search.
    Generate {
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long)]
        vocab: PathBuf,
        /// Plain text, one sentence per line.
        #[arg(long = "in")]
        input: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long)]
        beam: Option<usize>,
    },
    /// Corpus BLEU of checkpoints on one split of an aligned corpus.
    Bleu {
        #[arg(long, required = true)]
        checkpoint: Vec<PathBuf>,
        #[arg(long)]
        vocab: PathBuf,
        #[arg(long)]
        data: PathBuf,
        #[arg(long, default_value = "test")]
        split: String,
        #[arg(long)]
        beam: Option<usize>,
    },
    /// Blinded annotation batch from a run's generations.jsonl.
    ExportAnnotation {
        #[arg(long)]
        generations: PathBuf,
        /// Originals drawn at random; all when omitted.
        #[arg(long)]
        sample: Option<usize>,
        #[arg(long)]
        blinded: PathBuf,
        #[arg(long)]
        key: PathBuf,
    },
    /// Unblind ratings and report means, #good, agreement and pairwise tests.
    AnalyzeAnnotation {
        #[arg(long)]
        key: PathBuf,
        /// JSONL rating files.
        #[arg(long, required = true)]
        ratings: Vec<PathBuf>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Every stage from harvest to BLEU, with a manifest.
    Run {
        #[arg(long)]
        out_dir: PathBuf,
    },
}

#[derive(Clone, Copy, clap::ValueEnum)]
enum ScorerArg {
    Tfidf,
    File,
}

fn load_config(path: Option<&Path>) -> Result<PipelineConfig> {
    let cfg = match path {
        Some(p) => PipelineConfig::load(p)?,
        None => {
            let mut c = PipelineConfig::default();
            c.apply_seed_env()?;
            c.validate()?;
            c
        }
    };
    Ok(cfg)
}

fn write_out(path: Option<&Path>, text: &str) -> Result<()> {
    match path {
        Some(p) => std::fs::write(p, text).with_context(|| format!("writing {}", p.display())),
        None => {
            print!("{text}");
            Ok(())
        }
    }
}

fn split_pairs(pairs: &[AlignedPair], split: Split) -> Vec<(String, String)> {
    pipeline::pair_texts(pipeline::split_of(pairs, split))
}

fn parse_split(s: &str) -> Result<Split> {
    Ok(match s {
        "train" => Split::Train,
        "valid" => Split::Valid,
        "test" => Split::Test,
        _ => bail!("unknown split {s:?}; expected train, valid or test"),
    })
}

fn main() -> std::process::ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    match run(Cli::parse()) {
        Ok(()) => std::process::ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            std::process::ExitCode::FAILURE
        }
    }
}

fn run(cli: Cli) -> Result<()> {
    let mut cfg = load_config(cli.config.as_deref())?;

    match cli.command {
        Command::Harvest {
            git_dir,
            input,
            keywords,
            min_stars,
            min_commits,
            out,
        } => {
            if git_dir.is_some() || input.is_some() {
                cfg.ingest.git_dir = git_dir;
                cfg.ingest.pairs = input;
            }
            cfg.ingest.keywords_path = keywords.or(cfg.ingest.keywords_path);
            cfg.ingest.min_stars = min_stars.unwrap_or(cfg.ingest.min_stars);
            cfg.ingest.min_commits = min_commits.unwrap_or(cfg.ingest.min_commits);
            let pairs = pipeline::harvest(&cfg)?;
            store_pairs(&pairs, &out)?;
            log::info!("{} document pairs written to {}", pairs.len(), out.display());
        }
        Command::Preprocess { input, out } => {
            let records = preprocess_pairs(&load_pairs(&input)?);
            write_jsonl(&records, &out)?;
        }
        Command::Align {
            input,
            out,
            scorer,
            score_file,
            window,
            tfidf_threshold,
            bleu_lo,
            bleu_hi,
            counts,
        } => {
            let a = &mut cfg.align;
            if let Some(s) = scorer {
                a.scorer = match s {
                    ScorerArg::Tfidf => ScorerKind::Tfidf,
                    ScorerArg::File => ScorerKind::File,
                };
            }
            a.score_file = score_file.or(a.score_file.take());
            a.window = window.unwrap_or(a.window);
            a.tfidf_threshold = tfidf_threshold.unwrap_or(a.tfidf_threshold);
            a.bleu_lo = bleu_lo.unwrap_or(a.bleu_lo);
            a.bleu_hi = bleu_hi.unwrap_or(a.bleu_hi);
            cfg.validate()?;
            let records: Vec<MaskedDocRecord> = read_jsonl(&input)?;
            let aligned = pipeline::align(&records, &cfg)?;
            write_jsonl(&aligned.pairs, &out)?;
            let summary = serde_json::json!({ "counts": aligned.counts, "anomaly": aligned.anomaly });
            write_out(counts.as_deref(), &(serde_json::to_string_pretty(&summary)? + "\n"))?;
        }
        Command::Sweep { labeled, grid, out } => {
            let data = load_labeled(&labeled)?;
            let texts: Vec<&str> = data.iter().flat_map(|p| [p.simple.as_str(), p.regular.as_str()]).collect();
            let model = TfidfModel::fit(&texts)?;
            let result = threshold_sweep(&data, &model, &parse_grid(&grid)?)?;
            write_out(out.as_deref(), &result.to_csv())?;
        }
        Command::Stats { input, out } => {
            let pairs: Vec<AlignedPair> = read_jsonl(&input)?;
            let simple: Vec<&str> = pairs.iter().map(|p| p.simple.as_str()).collect();
            let regular: Vec<String> = pairs.iter().map(|p| p.regular_text()).collect();
            let stats = corpus_stats(&simple, &regular)?;
            write_out(out.as_deref(), &(serde_json::to_string_pretty(&stats)? + "\n"))?;
        }
        Command::TrainTokenizer { input, out, vocab_size } => {
            let corpora = input
                .iter()
                .map(|p| read_jsonl::<AlignedPair>(p))
                .collect::<rsimplify::Result<Vec<_>>>()?;
            let refs: Vec<&[AlignedPair]> = corpora.iter().map(Vec::as_slice).collect();
            let tok = wordpiece::train(
                &pipeline::tokenizer_corpus(&refs),
                vocab_size.unwrap_or(cfg.tokenizer.vocab_size),
            )?;
            tok.save(&out)?;
            log::info!("{} tokens written to {}", tok.len(), out.display());
        }
        Command::Train {
            data,
            vocab,
            out_dir,
            epochs,
            resume,
        } => {
            let tok = WordPieceModel::load(&vocab)?;
            let pairs = pipeline::load_parallel(&data, &cfg)?;
            let mut tc = cfg.train.train_config(cfg.seed);
            if let Some(e) = epochs {
                tc.epochs = e;
            }
            let trainer = match resume {
                Some(p) => Trainer::resume(Checkpoint::load(&p)?, tc)?,
                None => Trainer::new(
                    ModelConfig {
                        vocab_size: tok.len(),
                        ..cfg.model
                    },
                    tc,
                )?,
            };
            if trainer.model.vocab_size != tok.len() {
                bail!("checkpoint vocabulary {} does not match {}", trainer.model.vocab_size, tok.len());
            }
            let max_len = trainer.model.max_len;
            let train = encode_pairs(&tok, &split_pairs(&pairs, Split::Train), max_len);
            let valid = encode_pairs(&tok, &split_pairs(&pairs, Split::Valid), max_len);
            let out = run_training(trainer, &train, &valid, Some(&out_dir))?;
            print!("{}", loss_curve_csv(&out.curve));
            log::info!("best epoch {} (validation loss {:.4})", out.best_epoch, out.best_val_loss);
        }
        Command::Finetune {
            base,
            data,
            vocab,
            out_dir,
            epochs,
            reset_optimizer,
        } => {
            let tok = WordPieceModel::load(&vocab)?;
            let pairs = pipeline::load_parallel(&data, &cfg)?;
            let mut tc = cfg.train.train_config(cfg.seed);
            if let Some(e) = epochs {
                tc.epochs = e;
            }
            let base = base.map(|p| Checkpoint::load(&p)).transpose()?;
            let model = ModelConfig {
                vocab_size: tok.len(),
                ..base.as_ref().map_or(cfg.model, |b| b.model)
            };
            let train = encode_pairs(&tok, &split_pairs(&pairs, Split::Train), model.max_len);
            let valid = encode_pairs(&tok, &split_pairs(&pairs, Split::Valid), model.max_len);
            let out = finetune(base, model, tok.len(), tc, reset_optimizer, &train, &valid, Some(&out_dir))?;
            print!("{}", loss_curve_csv(&out.curve));
            log::info!("best epoch {} (validation loss {:.4})", out.best_epoch, out.best_val_loss);
        }
        Command::Generate {
            checkpoint,
            vocab,
            input,
            out,
            beam,
        } => {
            let (tok, ckpt) = pipeline::load_model(&vocab, &checkpoint)?;
            let text = std::fs::read_to_string(&input).with_context(|| format!("reading {}", input.display()))?;
            let lines: Vec<&str> = text.lines().filter(|l| !l.trim().is_empty()).collect();
            let outputs = generate_all(
                &ckpt.model,
                &ckpt.params,
                &tok,
                &lines,
                beam.unwrap_or(cfg.train.beam_size),
                cfg.train.max_output_len,
            )?;
            write_out(out.as_deref(), &outputs.iter().map(|o| format!("{o}\n")).collect::<String>())?;
        }
        Command::Bleu {
            checkpoint,
            vocab,
            data,
            split,
            beam,
        } => {
            let pairs: Vec<AlignedPair> = read_jsonl(&data)?;
            let test = split_pairs(&pairs, parse_split(&split)?);
            println!("checkpoint,bleu_x100");
            for path in checkpoint {
                let (tok, ckpt) = pipeline::load_model(&vocab, &path)?;
                let (score, _) = evaluate_bleu(
                    &ckpt.model,
                    &ckpt.params,
                    &tok,
                    &test,
                    beam.unwrap_or(cfg.train.beam_size),
                    cfg.train.max_output_len,
                )?;
                println!("{},{:.4}", path.display(), score.x100);
            }
        }
        Command::ExportAnnotation {
            generations,
            sample,
            blinded,
            key,
        } => {
            let mut rows: Vec<Generation> = read_jsonl(&generations)?;
            if let Some(n) = sample {
                if n > rows.len() {
                    bail!("cannot sample {n} of {} generations", rows.len());
                }
                rows.shuffle(&mut ChaCha8Rng::seed_from_u64(cfg.seed));
                rows.truncate(n);
            }
            let originals: Vec<String> = rows.iter().map(|g| g.source.clone()).collect();
            let mut outputs: BTreeMap<String, Vec<String>> = BTreeMap::new();
            for g in &rows {
                for (scheme, text) in &g.outputs {
                    outputs.entry(scheme.to_string()).or_default().push(text.clone());
                }
            }
            let batch = export_annotation_batch(&originals, &outputs, cfg.seed)?;
            write_jsonl(&batch.blinded, &blinded)?;
            write_jsonl(&batch.key, &key)?;
            log::info!("{} rows, gate at position {}", batch.blinded.len(), batch.gate_position);
        }
        Command::AnalyzeAnnotation { key, ratings, out } => {
            let key: Vec<KeyItem> = read_jsonl(&key)?;
            let mut all: Vec<Rating> = Vec::new();
            for p in &ratings {
                all.extend(read_jsonl::<Rating>(p)?);
            }
            let report = analyze_annotations(&key, &all)?;
            eprint!("{}", report.render());
            write_out(out.as_deref(), &(serde_json::to_string_pretty(&report)? + "\n"))?;
        }
        Command::Run { out_dir } => {
            let manifest = pipeline::run_pipeline(&cfg, &out_dir)?;
            log::info!(
                "{} stages complete; artifacts under {}",
                manifest.stages.len(),
                out_dir.display()
            );
        }
    }
    Ok(())
}
