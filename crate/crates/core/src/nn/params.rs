use std::collections::BTreeMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::{ModelConfig, Scalar, Tensor};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Init {
    Xavier,
    Zeros,
    Ones,
}

fn attn(p: &str, d: usize, out: &mut Vec<(String, Vec<usize>, Init)>) {
    for w in ["wq", "wk", "wv", "wo"] {
        out.push((format!("{p}.{w}"), vec![d, d], Init::Xavier));
    }
    // no key bias: it shifts every score of a query equally and cancels in softmax
    for b in ["bq", "bv", "bo"] {
        out.push((format!("{p}.{b}"), vec![d], Init::Zeros));
    }
}

fn norm(p: &str, d: usize, out: &mut Vec<(String, Vec<usize>, Init)>) {
    out.push((format!("{p}.gain"), vec![d], Init::Ones));
    out.push((format!("{p}.bias"), vec![d], Init::Zeros));
}

fn ffn(p: &str, d: usize, ff: usize, out: &mut Vec<(String, Vec<usize>, Init)>) {
    out.push((format!("{p}.w1"), vec![d, ff], Init::Xavier));
    out.push((format!("{p}.b1"), vec![ff], Init::Zeros));
    out.push((format!("{p}.w2"), vec![ff, d], Init::Xavier));
    out.push((format!("{p}.b2"), vec![d], Init::Zeros));
}

/// Every parameter of a configuration with its shape and initializer, in
/// canonical (lexicographic) order.
pub fn parameter_specs(cfg: &ModelConfig) -> Vec<(String, Vec<usize>, Init)> {
    let (d, ff, v) = (cfg.d_model, cfg.d_ff, cfg.vocab_size);
    let mut out = vec![
        ("embedding".to_string(), vec![v, d], Init::Xavier),
        ("output.weight".to_string(), vec![d, v], Init::Xavier),
        ("output.bias".to_string(), vec![v], Init::Zeros),
    ];
    for l in 0..cfg.encoder_layers {
        attn(&format!("encoder.{l}.self_attn"), d, &mut out);
        norm(&format!("encoder.{l}.norm1"), d, &mut out);
        ffn(&format!("encoder.{l}.ffn"), d, ff, &mut out);
        norm(&format!("encoder.{l}.norm2"), d, &mut out);
    }
    for l in 0..cfg.decoder_layers {
        attn(&format!("decoder.{l}.self_attn"), d, &mut out);
        norm(&format!("decoder.{l}.norm1"), d, &mut out);
        attn(&format!("decoder.{l}.cross_attn"), d, &mut out);
        norm(&format!("decoder.{l}.norm2"), d, &mut out);
        ffn(&format!("decoder.{l}.ffn"), d, ff, &mut out);
        norm(&format!("decoder.{l}.norm3"), d, &mut out);
    }
    out.sort_by(|a, b| a.0.cmp(&b.0));
    out
}

/// Named parameter tensors, iterated in canonical name order.
#[derive(Debug, Clone, PartialEq)]
pub struct Parameters<T> {
    pub tensors: BTreeMap<String, Tensor<T>>,
}

impl<T: Scalar> Parameters<T> {
    /// Xavier-uniform weights, zero biases and unit gains, drawn in canonical
    /// name order from a ChaCha8 stream seeded with `seed`. The draws are
    /// made in `f64`, so both precisions start from the same values.
    pub fn init(cfg: &ModelConfig, seed: u64) -> Result<Self> {
        cfg.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut tensors = BTreeMap::new();
        for (name, shape, init) in parameter_specs(cfg) {
            let t = match init {
                Init::Zeros => Tensor::zeros(&shape),
                Init::Ones => Tensor::filled(&shape, T::one()),
                Init::Xavier => {
                    let bound = (6.0 / (shape[0] + shape[1]) as f64).sqrt();
                    let n = shape[0] * shape[1];
                    let data = (0..n).map(|_| T::of(rng.gen_range(-bound..bound))).collect();
                    Tensor { shape, data }
                }
            };
            tensors.insert(name, t);
        }
        Ok(Parameters { tensors })
    }

    pub fn zeros_like(&self) -> Self {
        Parameters {
            tensors: self
                .tensors
                .iter()
                .map(|(k, t)| (k.clone(), t.zeros_like()))
                .collect(),
        }
    }

    pub fn get(&self, name: &str) -> &Tensor<T> {
        self.tensors
            .get(name)
            .unwrap_or_else(|| panic!("missing parameter {name}"))
    }

    pub fn get_mut(&mut self, name: &str) -> &mut Tensor<T> {
        self.tensors
            .get_mut(name)
            .unwrap_or_else(|| panic!("missing parameter {name}"))
    }

    /// Total number of scalar parameters.
    pub fn count(&self) -> usize {
        self.tensors.values().map(Tensor::len).sum()
    }

    pub fn cast<U: Scalar>(&self) -> Parameters<U> {
        Parameters {
            tensors: self.tensors.iter().map(|(k, t)| (k.clone(), t.cast())).collect(),
        }
    }

    /// Checks names and shapes against a configuration.
    pub fn check(&self, cfg: &ModelConfig) -> Result<()> {
        let specs = parameter_specs(cfg);
        if specs.len() != self.tensors.len() {
            return Err(Error::Shape(format!(
                "expected {} parameter tensors, found {}",
                specs.len(),
                self.tensors.len()
            )));
        }
        for (name, shape, _) in specs {
            match self.tensors.get(&name) {
                Some(t) if t.shape == shape && t.data.len() == shape.iter().product::<usize>() => {}
                Some(t) => {
                    return Err(Error::Shape(format!(
                        "parameter {name} has shape {:?}, expected {shape:?}",
                        t.shape
                    )))
                }
                None => return Err(Error::Shape(format!("missing parameter {name}"))),
            }
        }
        Ok(())
    }

    /// Same names and shapes as `other`.
    pub fn same_layout<U>(&self, other: &Parameters<U>) -> bool {
        self.tensors.len() == other.tensors.len()
            && self
                .tensors
                .iter()
                .zip(&other.tensors)
                .all(|((a, ta), (b, tb))| a == b && ta.shape == tb.shape)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn toy() -> ModelConfig {
        ModelConfig {
            vocab_size: 50,
            d_model: 16,
            heads: 2,
            encoder_layers: 1,
            decoder_layers: 1,
            d_ff: 32,
            dropout: 0.1,
            max_len: 16,
        }
    }

    #[test]
    fn deterministic_and_bounded() {
        let a = Parameters::<f64>::init(&toy(), 3).unwrap();
        let b = Parameters::<f64>::init(&toy(), 3).unwrap();
        assert_eq!(a, b);
        let w = a.get("encoder.0.ffn.w1");
        let bound = (6.0f64 / (16.0 + 32.0)).sqrt();
        assert!(w.data.iter().all(|x| x.abs() <= bound));
        assert!(a.get("encoder.0.norm1.gain").data.iter().all(|&g| g == 1.0));
        assert!(a.get("output.bias").data.iter().all(|&g| g == 0.0));
        a.check(&toy()).unwrap();
    }

    #[test]
    fn precisions_agree() {
        let a = Parameters::<f64>::init(&toy(), 9).unwrap();
        let b = Parameters::<f32>::init(&toy(), 9).unwrap();
        assert_eq!(a.cast::<f32>(), b);
    }

    #[test]
    fn invalid_config_rejected() {
        let mut c = toy();
        c.heads = 3;
        assert!(Parameters::<f32>::init(&c, 0).is_err());
    }
}
