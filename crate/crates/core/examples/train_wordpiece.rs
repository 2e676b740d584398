//! Trains a small WordPiece vocabulary and shows how sentences split into
//! subwords, with the mask tokens kept whole.

use rsimplify::synth::pretrain_pairs;
use rsimplify::wordpiece;

fn main() -> rsimplify::Result<()> {
    let pairs = pretrain_pairs(300, 5);
    let corpus: Vec<String> = pairs
        .iter()
        .flat_map(|p| p.regular.iter().cloned().chain([p.simple.clone()]))
        .collect();
    let tok = wordpiece::train(&corpus, 400)?;
    println!("{} tokens", tok.len());
    for text in [
        "Install the toolkit with <code_small> and read <url> first.",
        "Reproducibility matters for unfamiliar workloads.",
    ] {
        let ids = tok.encode(text, true);
        let pieces: Vec<&str> = ids.iter().filter_map(|&i| tok.token(i)).collect();
        println!("{text}\n  {pieces:?}\n  -> {}", tok.decode(&ids)?);
    }
    Ok(())
}
