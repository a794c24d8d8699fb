//! Minimal dense tensor engine: reverse-mode autodiff, the layer set of the
//! tremor model, Adam and the learning-rate schedule.

mod adam;
mod checkpoint;
mod gradcheck;
mod graph;
mod layers;
mod ops;
mod scalar;
mod tensor;

pub use adam::{lr_schedule, AdamState, BASE_LR, BETA1, BETA2, EPSILON, LR_DECAY};
pub use checkpoint::{decode_checkpoint, encode_checkpoint, Checkpoint, CHECKPOINT_MAGIC, CHECKPOINT_VERSION};
pub use gradcheck::{grad_check, grad_check_steps, relative_error, FD_STEP, FD_STEPS};
pub(crate) use graph::clamp_prob;
pub use graph::{softmax_in_place, Gradients, Graph, Var, PROB_CLAMP};
pub use layers::{glorot, LayerCount, LayerSpec, Mode, ParamStore, Stack, LEAKY_SLOPE};
pub use ops::{conv1d_forward, dense_forward, dropout, leaky_relu, maxpool1d_forward, softmax2};
pub use scalar::{gemm, Scalar, Strides};
pub use tensor::Tensor;
