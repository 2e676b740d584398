//! Compares analytic gradients of the Transformer loss with central finite
//! differences in double precision.

use rsimplify::nn::{gradient_check, Batch, ModelConfig, Parameters};

fn main() -> rsimplify::Result<()> {
    let model = ModelConfig {
        vocab_size: 50,
        d_model: 16,
        heads: 2,
        encoder_layers: 1,
        decoder_layers: 1,
        d_ff: 32,
        dropout: 0.0,
        max_len: 16,
    };
    let params = Parameters::<f64>::init(&model, 4)?;
    let batch = Batch::new(&[&[8, 12, 30, 41, 9, 17, 22], &[10, 11, 49]], &[&[5, 6, 7], &[3, 4, 4, 2, 9]])?;
    let report = gradient_check(&model, &params, &batch, 1e-5, 1200, 9)?;
    println!(
        "checked {} coordinates ({} skipped at ReLU kinks), max relative error {:.3e}",
        report.checked, report.skipped_kinks, report.max_rel_error
    );
    if let Some((name, idx)) = &report.worst {
        println!("worst coordinate: {name}[{idx}]");
    }
    Ok(())
}
