//! A small explicit-backward tensor engine: the operators, loss, optimizer
//! and learning-rate schedule the two backbones need.

mod layers;
mod loss;
pub mod ops;
mod optim;
mod real;
mod schedule;
mod tensor;

pub use layers::{
    join, BatchNorm, Conv1d, Conv2d, ConvBnRelu, Gem, Linear, Module, ParamKind, GEM_INIT_P,
};
pub use loss::{bce_with_logits, sigmoid};
pub use optim::{adam_update, Adam, AdamHyper, Optimizer};
pub use real::{gemm, Real};
pub use schedule::{cosine_lr, TrainConfig};
pub use tensor::Tensor;

use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum NnError {
    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
}
