//! Differentiable kernels the auto-encoder is assembled from.
//!
//! Every kernel is a pure function over [`Tensor`](crate::tensor::Tensor)s;
//! backward passes take whatever the forward pass recorded (inputs,
//! activations, argmax indices) explicitly.

mod activation;
mod adam;
mod conv;
mod loss;
mod pool;
mod upsample;

pub use activation::{relu, relu_backward, sigmoid, sigmoid_backward};
pub use adam::{adam_step, AdamConfig, AdamState};
pub use conv::{conv2d_backward, conv2d_backward_params, conv2d_same, ConvCache, ConvGrads, ConvLayer};
pub use loss::mse_loss;
pub use pool::{maxpool_2x2_ceil, maxpool_backward, PoolIndices};
pub use upsample::{upsample_nearest_backward, upsample_nearest_to};

use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum NnError {
    #[error("data length {len} does not match shape {shape:?}")]
    DataLength { shape: Vec<usize>, len: usize },
    #[error("expected a rank-{expected} tensor, got shape {shape:?}")]
    Rank { expected: usize, shape: Vec<usize> },
    #[error("{what}: shape {left:?} does not match {right:?}")]
    ShapeMismatch {
        what: &'static str,
        left: Vec<usize>,
        right: Vec<usize>,
    },
    #[error("{what}: {dim} is {got}, expected {expected}")]
    Dimension {
        what: &'static str,
        dim: &'static str,
        got: usize,
        expected: usize,
    },
    #[error("{what}: spatial extent must be at least 1, got {h}x{w}")]
    EmptySpatial { what: &'static str, h: usize, w: usize },
    #[error("upsample target {target_h}x{target_w} is not reachable from {h}x{w} (allowed 2n-1 or 2n)")]
    UpsampleTarget {
        h: usize,
        w: usize,
        target_h: usize,
        target_w: usize,
    },
    #[error("convolution backward called without a cached forward input")]
    MissingCache,
    #[error("pool indices are stale: recorded output {recorded:?}, gradient {got:?}")]
    StaleIndices { recorded: Vec<usize>, got: Vec<usize> },
    #[error("non-finite gradient for parameter `{param}`")]
    NonFiniteGradient { param: String },
    #[error("optimizer state has {expected} parameters, got {got}")]
    ParamCount { expected: usize, got: usize },
}
