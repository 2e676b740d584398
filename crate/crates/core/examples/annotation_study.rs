//! Exports a blinded annotation batch for three systems, simulates raters
//! (one of whom fails the quality gate) and analyzes the ratings.

use std::collections::BTreeMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rsimplify::pipeline::annotation::{analyze_annotations, export_annotation_batch, Rating};

fn main() -> rsimplify::Result<()> {
    let originals: Vec<String> = (0..30)
        .map(|i| format!("Sentence {i} is written in a considerably more complicated manner than necessary."))
        .collect();
    let mut outputs = BTreeMap::new();
    outputs.insert("baseline".to_string(), originals.clone());
    outputs.insert(
        "early".to_string(),
        (0..30).map(|i| format!("Sentence {i} is more complicated than needed.")).collect(),
    );
    outputs.insert(
        "best".to_string(),
        (0..30).map(|i| format!("Sentence {i} is too complicated.")).collect(),
    );
    let batch = export_annotation_batch(&originals, &outputs, 42)?;
    println!("{} rows, gate at {}", batch.blinded.len(), batch.gate_position);

    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let mut ratings = Vec::new();
    for rater in ["r1", "r2", "r3", "careless"] {
        for item in &batch.key {
            for (v, models) in item.models.iter().enumerate() {
                let base: u8 = if item.is_gate {
                    if rater == "careless" { 5 } else { 1 }
                } else if models.iter().any(|m| m == "best") {
                    4
                } else if models.iter().any(|m| m == "early") {
                    3
                } else {
                    2
                };
                let jitter = |rng: &mut ChaCha8Rng| (base as i32 + rng.gen_range(-1..=1)).clamp(1, 5) as u8;
                ratings.push(Rating {
                    rater: rater.to_string(),
                    item_id: item.item_id.clone(),
                    variant: v,
                    semantics: Some(if item.is_gate { base } else { jitter(&mut rng) }),
                    grammar: Some(jitter(&mut rng)),
                    simplicity: Some(jitter(&mut rng)),
                });
            }
        }
    }
    let report = analyze_annotations(&batch.key, &ratings)?;
    print!("{}", report.render());
    for t in &report.tests {
        if let Some(p) = t.p_value {
            println!("{:?} {} vs {}: p = {:.2e} over {} pairs", t.aspect, t.model_a, t.model_b, p, t.pairs);
        }
    }
    Ok(())
}
