//! Sweeps the TF-IDF distance threshold over the bundled 60-pair labeled
//! set and prints precision, recall, F1 and accuracy per threshold.

use std::path::Path;

use rsimplify::align::{load_labeled, parse_grid, threshold_sweep};
use rsimplify::metrics::TfidfModel;

fn main() -> rsimplify::Result<()> {
    let path = Path::new(env!("CARGO_MANIFEST_DIR")).join("fixtures/alignment_labels.tsv");
    let labeled = load_labeled(&path)?;
    let texts: Vec<&str> = labeled.iter().flat_map(|p| [p.simple.as_str(), p.regular.as_str()]).collect();
    let model = TfidfModel::fit(&texts)?;
    let sweep = threshold_sweep(&labeled, &model, &parse_grid("0.1:0.9:0.05")?)?;
    print!("{}", sweep.to_csv());
    let best = sweep
        .rows
        .iter()
        .max_by(|a, b| a.f1.total_cmp(&b.f1))
        .expect("nonempty grid");
    println!("best F1 {:.3} at threshold {}", best.f1, best.threshold);
    Ok(())
}
