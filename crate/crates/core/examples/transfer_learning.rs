//! Pretrains on 2,000 round-bracket pairs, then fine-tunes on 64
//! square-bracket pairs from each transfer scheme and compares validation
//! loss curves with training from scratch.
//!
//! Usage: `cargo run --example transfer_learning [seed]`

use std::time::Instant;

use rsimplify::nn::ModelConfig;
use rsimplify::synth::{bracket_corpus, BracketStyle, SynthShape};
use rsimplify::train::{encode_pairs, finetune, run_training, Checkpoint, TrainConfig, TransferEpochs, TransferScheme, Trainer};
use rsimplify::wordpiece;

fn main() -> rsimplify::Result<()> {
    let seed: u64 = std::env::args().nth(1).and_then(|s| s.parse().ok()).unwrap_or(1);
    let shape = SynthShape::default();
    let a_train = bracket_corpus(2000, 100 + seed, BracketStyle::Round, shape);
    let a_valid = bracket_corpus(200, 200 + seed, BracketStyle::Round, shape);
    let b_train = bracket_corpus(64, 300 + seed, BracketStyle::Square, shape);
    let b_valid = bracket_corpus(64, 400 + seed, BracketStyle::Square, shape);
    let texts: Vec<&str> = a_train
        .iter()
        .chain(&b_train)
        .flat_map(|(a, b)| [a.as_str(), b.as_str()])
        .collect();
    let tok = wordpiece::train(&texts, 256)?;
    let model = ModelConfig::desk(tok.len());
    let enc = |p: &[(String, String)]| encode_pairs(&tok, p, model.max_len);

    let dir = tempfile_dir(seed);
    let start = Instant::now();
    let pre = TrainConfig {
        learning_rate: 1e-3,
        epochs: 30,
        seed,
        save_epochs: vec![3, 12],
        ..TrainConfig::default()
    };
    let out = run_training(Trainer::new(model, pre)?, &enc(&a_train), &enc(&a_valid), Some(&dir))?;
    println!(
        "pretrained 30 epochs in {:.0}s, best epoch {} valid {:.4}",
        start.elapsed().as_secs_f64(),
        out.best_epoch,
        out.best_val_loss
    );

    let fine = TrainConfig {
        learning_rate: 1e-3,
        epochs: 10,
        seed,
        ..TrainConfig::default()
    };
    for scheme in TransferScheme::ALL {
        let base = match scheme.source(&dir, TransferEpochs::default()) {
            Some(p) => Some(Checkpoint::load(&p)?),
            None => None,
        };
        let r = finetune(base, model, tok.len(), fine.clone(), false, &enc(&b_train), &enc(&b_valid), None)?;
        let v: Vec<String> = r
            .curve
            .iter()
            .map(|p| format!("{:.3}", p.valid_loss.unwrap_or(f64::NAN)))
            .collect();
        println!("{scheme:17} {}", v.join(" "));
    }
    println!("total {:.0}s", start.elapsed().as_secs_f64());
    std::fs::remove_dir_all(&dir).ok();
    Ok(())
}

fn tempfile_dir(seed: u64) -> std::path::PathBuf {
    let d = std::env::temp_dir().join(format!("rsimplify-transfer-{}-{seed}", std::process::id()));
    std::fs::create_dir_all(&d).expect("temp dir");
    d
}
