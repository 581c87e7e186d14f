//! Dense-network engine: forward pass split at the backbone/head boundary,
//! losses, segment-masked backpropagation, optimizers and learning-rate decay.
//!
//! Everything is `f64` and deterministic; functions take values or shared
//! references and never hold global state.

mod backprop;
mod gradcheck;
mod loss;
mod model;
mod optim;
mod tensor;

use thiserror::Error;

pub use backprop::{backward_head, backward_masked, forward_features, forward_head, forward_split, ForwardPass, Gradients, Trainable};
pub use gradcheck::grad_check;
pub use loss::{sigmoid, sigmoid_bce, softmax_cross_entropy, LossOutput, Targets};
pub use model::{Activation, LayerParams, LayerSpec, ModelSpec, ParamSet, Segment};
pub use optim::{adamw_step, lr_at_round, sgd_step, LrPolicy, OptimizerConfig, OptimizerKind, OptimizerState};
pub use tensor::{argmax, matmul, matmul_a_bt, matmul_at_b, softmax_rows, Tensor};
pub(crate) use tensor::softmax_in_place;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum NnError {
    #[error("shape mismatch: {0}")]
    Shape(String),
    #[error("non-finite value {0}")]
    NonFinite(f64),
    #[error("invalid model: {0}")]
    InvalidSpec(String),
    #[error("parameter mismatch: {0}")]
    Mismatch(String),
    #[error("label {label} out of range for {classes} classes")]
    LabelOutOfRange { label: usize, classes: usize },
    #[error("binary target must be 0 or 1, got {0}")]
    BadTarget(f64),
}
