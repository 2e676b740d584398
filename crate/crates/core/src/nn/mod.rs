//! Dense tensors and an encoder-decoder Transformer with analytic gradients.
//!
//! Everything is generic over the element type: `f64` is used to check
//! gradients against finite differences, `f32` for training. Matrix products
//! go through `matrixmultiply`, which is single-threaded and deterministic.

mod check;
mod config;
mod model;
pub mod ops;
mod params;
mod scalar;
mod tensor;

pub use check::{gradient_check, relative_error, GradCheck};
pub use config::ModelConfig;
pub use model::{
    cross_entropy, encode_source, forward, loss, loss_and_grad, next_token_log_probs, row_losses, Batch, Cache,
    PAD_ID,
};
pub use params::{parameter_specs, Init, Parameters};
pub use scalar::{gemm, Scalar, View};
pub use tensor::Tensor;
