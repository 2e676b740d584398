//! Finite-difference check of the analytic gradients.

use rand::seq::index::sample;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::model::{forward, loss, loss_and_grad, Batch};
use super::{ModelConfig, Parameters};
use crate::error::Result;

/// Outcome of [`gradient_check`].
#[derive(Debug, Clone, PartialEq)]
pub struct GradCheck {
    /// Coordinates compared.
    pub checked: usize,
    /// Coordinates skipped because the perturbation crossed a ReLU kink.
    pub skipped_kinks: usize,
    pub max_rel_error: f64,
    /// Parameter name and index of the worst coordinate.
    pub worst: Option<(String, usize)>,
}

/// Relative error with a floor on the denominator.
pub fn relative_error(a: f64, b: f64) -> f64 {
    (a - b).abs() / a.abs().max(b.abs()).max(1e-8)
}

/// Compares analytic gradients with central differences at `samples`
/// randomly chosen coordinates (all coordinates when `samples` exceeds the
/// parameter count). Dropout is off.
///
/// A coordinate is skipped when `θ ± eps` changes the sign pattern of any ReLU
/// input: the loss is not differentiable across the kink, so the finite
/// difference there measures nothing about the backward pass.
pub fn gradient_check(
    cfg: &ModelConfig,
    params: &Parameters<f64>,
    batch: &Batch,
    eps: f64,
    samples: usize,
    seed: u64,
) -> Result<GradCheck> {
    let (_, grads) = loss_and_grad(cfg, params, batch, None)?;
    let coords: Vec<(String, usize)> = params
        .tensors
        .iter()
        .flat_map(|(name, t)| (0..t.len()).map(move |i| (name.clone(), i)))
        .collect();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let chosen: Vec<usize> = if samples >= coords.len() {
        (0..coords.len()).collect()
    } else {
        let mut v = sample(&mut rng, coords.len(), samples).into_vec();
        v.sort_unstable();
        v
    };

    let mut out = GradCheck {
        checked: 0,
        skipped_kinks: 0,
        max_rel_error: 0.0,
        worst: None,
    };
    let mut p = params.clone();
    for k in chosen {
        let (name, i) = &coords[k];
        let orig = params.get(name).data[*i];
        p.get_mut(name).data[*i] = orig + eps;
        let (_, cache_plus) = forward(cfg, &p, batch, None)?;
        let plus = loss(cfg, &p, batch, None)?;
        p.get_mut(name).data[*i] = orig - eps;
        let (_, cache_minus) = forward(cfg, &p, batch, None)?;
        let minus = loss(cfg, &p, batch, None)?;
        p.get_mut(name).data[*i] = orig;
        if cache_plus.relu_pattern() != cache_minus.relu_pattern() {
            out.skipped_kinks += 1;
            continue;
        }
        let fd = (plus - minus) / (2.0 * eps);
        let err = relative_error(grads.get(name).data[*i], fd);
        out.checked += 1;
        if err > out.max_rel_error || out.worst.is_none() {
            out.max_rel_error = err;
            out.worst = Some((name.clone(), *i));
        }
    }
    Ok(out)
}
