//! Dense feed-forward networks with explicit reverse-mode gradients, the two
//! losses used by the pipeline, Adam, and an early-stopping training loop.
//!
//! Everything runs in `f64`. Batches are `n x features` row-major matrices.

mod adam;
mod layer;
mod loss;
mod train;

pub use adam::{adam_step, AdamState, ADAM_BETA1, ADAM_BETA2, ADAM_EPSILON};
pub use layer::{Activation, DenseLayer, DenseStack, ForwardCache, LayerGrads, Mode};
pub use loss::{batch_loss_and_grad, loss_and_grad, softmax, LossKind, Target, Targets};
pub use train::{train_loop, Dataset, History, TrainConfig, Trainable, IMPROVEMENT_THRESHOLD};
