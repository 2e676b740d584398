//! Aligns the sentences of a README before and after a simplification commit
//! and prints the surviving pairs with their scores.

use rsimplify::align::{align_problems, AlignConfig, AlignmentProblem, TfidfScorer};
use rsimplify::mask::preprocess_document;
use rsimplify::metrics::TfidfModel;

const BEFORE: &str = "# Demo

Demo is a lightweight parser toolkit that was originally written in order to replace several older internal scripts.
It is primarily intended to be utilized by developers who need to process large log files in a reproducible manner.
Run `demo --help` for the list of options.
The project is maintained by volunteers (most of whom work on it in their spare time) and welcomes contributions.
";

const AFTER: &str = "# Demo

Demo is a lightweight parser toolkit that replaces several older scripts.
It is meant for developers who need to process large log files reproducibly.
Run `demo --help` for the list of options.
The project is maintained by volunteers and welcomes contributions.
";

fn main() -> rsimplify::Result<()> {
    let (_, regular) = preprocess_document(BEFORE);
    let (_, simple) = preprocess_document(AFTER);
    let texts: Vec<&str> = regular.iter().chain(&simple).map(|s| s.text.as_str()).collect();
    let model = TfidfModel::fit(&texts)?;
    let problem = AlignmentProblem { simple, regular };
    let out = align_problems(
        &[("demo".to_string(), problem)],
        &AlignConfig::default(),
        &TfidfScorer::new(&model),
        &model,
    )?;
    println!("{:?}", out.counts);
    for p in &out.pairs {
        println!("\ndistance {:.3}  bleu {:.3}", p.tfidf_distance, p.bleu);
        println!("  regular: {}", p.regular_text());
        println!("  simple:  {}", p.simple);
    }
    Ok(())
}
