use crate::error::{Error, Result};
use crate::nn::{Parameters, Scalar};

pub const BETA1: f64 = 0.9;
pub const BETA2: f64 = 0.999;
pub const ADAM_EPS: f64 = 1e-8;

/// First and second moment estimates plus the number of updates taken.
#[derive(Debug, Clone, PartialEq)]
pub struct AdamState<T> {
    pub m: Parameters<T>,
    pub v: Parameters<T>,
    pub step: u64,
}

impl<T: Scalar> AdamState<T> {
    pub fn new(params: &Parameters<T>) -> Self {
        AdamState {
            m: params.zeros_like(),
            v: params.zeros_like(),
            step: 0,
        }
    }
}

/// One bias-corrected Adam update. A positive `weight_decay` shrinks every
/// parameter by `lr * weight_decay * p`, decoupled from the gradient.
pub fn adam_step<T: Scalar>(
    params: &mut Parameters<T>,
    grads: &Parameters<T>,
    state: &mut AdamState<T>,
    lr: f64,
    weight_decay: f64,
) -> Result<()> {
    if !params.same_layout(grads) || !params.same_layout(&state.m) || !params.same_layout(&state.v) {
        return Err(Error::Shape("parameters, gradients and Adam moments differ in layout".into()));
    }
    state.step += 1;
    let t = state.step as f64;
    let c1 = T::of(1.0 / (1.0 - BETA1.powf(t)));
    let c2 = T::of(1.0 / (1.0 - BETA2.powf(t)));
    let (b1, b2) = (T::of(BETA1), T::of(BETA2));
    let (nb1, nb2) = (T::of(1.0 - BETA1), T::of(1.0 - BETA2));
    let (lr_t, eps, decay) = (T::of(lr), T::of(ADAM_EPS), T::of(lr * weight_decay));
    for (name, p) in params.tensors.iter_mut() {
        let g = &grads.get(name).data;
        let m = &mut state.m.get_mut(name).data;
        for (mi, &gi) in m.iter_mut().zip(g) {
            *mi = b1 * *mi + nb1 * gi;
        }
        let v = &mut state.v.get_mut(name).data;
        for (vi, &gi) in v.iter_mut().zip(g) {
            *vi = b2 * *vi + nb2 * gi * gi;
        }
        let m = &state.m.get(name).data;
        let v = &state.v.get(name).data;
        for ((pi, &mi), &vi) in p.data.iter_mut().zip(m).zip(v) {
            let update = (mi * c1) / ((vi * c2).sqrt() + eps);
            *pi = *pi - lr_t * update - decay * *pi;
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::Tensor;
    use std::collections::BTreeMap;

    fn scalar(x: f64) -> Parameters<f64> {
        let mut tensors = BTreeMap::new();
        tensors.insert("w".to_string(), Tensor::from_vec(&[1], vec![x]).unwrap());
        Parameters { tensors }
    }

    #[test]
    fn zero_gradient_leaves_parameters() {
        let mut p = scalar(0.7);
        let mut s = AdamState::new(&p);
        adam_step(&mut p, &scalar(0.0), &mut s, 0.1, 0.0).unwrap();
        assert_eq!(p.get("w").data[0], 0.7);
        assert_eq!(s.step, 1);
    }

    #[test]
    fn first_step_by_hand() {
        // m = 0.1, v = 0.001; corrected both to 1 => update 1 / (1 + 1e-8)
        let mut p = scalar(0.5);
        let mut s = AdamState::new(&p);
        adam_step(&mut p, &scalar(1.0), &mut s, 0.01, 0.0).unwrap();
        let expected = 0.5 - 0.01 * (1.0 / (1.0 + 1e-8));
        assert!((p.get("w").data[0] - expected).abs() < 1e-15);
        assert!((s.m.get("w").data[0] - 0.1).abs() < 1e-15);
        assert!((s.v.get("w").data[0] - 0.001).abs() < 1e-15);
    }

    #[test]
    fn second_step_by_hand() {
        let mut p = scalar(0.0);
        let mut s = AdamState::new(&p);
        adam_step(&mut p, &scalar(1.0), &mut s, 0.1, 0.0).unwrap();
        adam_step(&mut p, &scalar(-2.0), &mut s, 0.1, 0.0).unwrap();
        let m = 0.9 * 0.1 + 0.1 * -2.0;
        let v = 0.999 * 0.001 + 0.001 * 4.0;
        let mh = m / (1.0 - 0.81);
        let vh = v / (1.0 - 0.999f64 * 0.999);
        let first = -0.1 / (1.0 + 1e-8);
        let expected = first - 0.1 * mh / (vh.sqrt() + 1e-8);
        assert!((p.get("w").data[0] - expected).abs() < 1e-12);
    }

    #[test]
    fn decoupled_weight_decay() {
        let mut p = scalar(2.0);
        let mut s = AdamState::new(&p);
        adam_step(&mut p, &scalar(0.0), &mut s, 0.1, 0.5).unwrap();
        assert!((p.get("w").data[0] - (2.0 - 0.1 * 0.5 * 2.0)).abs() < 1e-15);
    }

    #[test]
    fn layout_mismatch_is_an_error() {
        let mut p = scalar(1.0);
        let mut s = AdamState::new(&p);
        let mut g = scalar(1.0);
        g.tensors.insert("extra".into(), Tensor::zeros(&[2]));
        assert!(adam_step(&mut p, &g, &mut s, 0.1, 0.0).is_err());
    }
}
