//! Trains a model briefly on bracket deletion, then compares greedy decoding
//! with beam search of growing width by model log-probability.

use rsimplify::nn::ModelConfig;
use rsimplify::synth::{bracket_corpus, BracketStyle, SynthShape};
use rsimplify::train::{beam_search, encode_pairs, greedy, TrainConfig, Trainer};
use rsimplify::wordpiece;

fn main() -> rsimplify::Result<()> {
    let pairs = bracket_corpus(64, 3, BracketStyle::Round, SynthShape::default());
    let texts: Vec<&str> = pairs.iter().flat_map(|(a, b)| [a.as_str(), b.as_str()]).collect();
    let tok = wordpiece::train(&texts, 256)?;
    let model = ModelConfig::desk(tok.len());
    let data = encode_pairs(&tok, &pairs, model.max_len);
    let mut trainer = Trainer::new(
        model,
        TrainConfig {
            learning_rate: 1e-3,
            ..TrainConfig::default()
        },
    )?;
    for _ in 0..30 {
        trainer.train_epoch(&data)?;
    }
    for (p, (src_text, _)) in data.iter().zip(&pairs).take(5) {
        let g = greedy(&model, &trainer.params, &p.src, 32)?;
        println!("{src_text}");
        println!("  greedy  {:8.3}  {}", g.log_prob, tok.decode(g.output())?);
        for k in [1, 3, 5] {
            let h = beam_search(&model, &trainer.params, &p.src, k, 32)?;
            println!("  beam {k}  {:8.3}  {}", h.log_prob, tok.decode(h.output())?);
        }
    }
    Ok(())
}
