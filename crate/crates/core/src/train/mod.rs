//! Adam, checkpoints, training loops, transfer learning and decoding.

mod adam;
mod beam;
mod checkpoint;
mod trainer;
mod transfer;

pub use adam::{adam_step, AdamState, ADAM_EPS, BETA1, BETA2};
pub use beam::{beam_search, evaluate_bleu, generate_all, generate_text, greedy, sequence_log_prob, Hypothesis};
pub use checkpoint::{Checkpoint, MAGIC, VERSION};
pub use trainer::{
    encode_pairs, epoch_checkpoint, evaluate_loss, loss_curve_csv, run_training, EncodedPair, LossPoint,
    TrainConfig, TrainOutcome, Trainer,
};
pub use transfer::{finetune, TransferEpochs, TransferScheme};
