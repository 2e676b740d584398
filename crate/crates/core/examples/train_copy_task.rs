//! Overfits a desk-scale model on 64 bracket-deletion pairs and reports how
//! many training targets greedy decoding reproduces.

use std::time::Instant;

use rsimplify::nn::ModelConfig;
use rsimplify::synth::{bracket_corpus, BracketStyle, SynthShape};
use rsimplify::train::{encode_pairs, greedy, TrainConfig, Trainer};
use rsimplify::wordpiece;

fn main() -> rsimplify::Result<()> {
    let pairs = bracket_corpus(64, 11, BracketStyle::Round, SynthShape::default());
    let texts: Vec<&str> = pairs.iter().flat_map(|(a, b)| [a.as_str(), b.as_str()]).collect();
    let tok = wordpiece::train(&texts, 256)?;
    let model = ModelConfig::desk(tok.len());
    let data = encode_pairs(&tok, &pairs, model.max_len);
    let config = TrainConfig {
        learning_rate: 1e-3,
        seed: 1,
        ..TrainConfig::default()
    };
    let mut trainer = Trainer::new(model, config)?;
    let start = Instant::now();
    for epoch in 1..=300 {
        let loss = trainer.train_epoch(&data)?;
        if epoch % 10 == 0 {
            let eval = trainer.evaluate(&data)?;
            println!("epoch {epoch:3}  train {loss:.4}  eval {eval:.4}  {:.1}s", start.elapsed().as_secs_f64());
            if eval < 0.1 {
                break;
            }
        }
    }
    let exact = data
        .iter()
        .filter(|p| greedy(&model, &trainer.params, &p.src, 32).map(|h| h.output() == p.tgt).unwrap_or(false))
        .count();
    println!("greedy reproduces {exact}/{} targets", data.len());
    Ok(())
}
