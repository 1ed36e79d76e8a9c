//! Convolutional auto-encoder: layouts for the 5/7/9-layer variants,
//! forward/backward passes, training and the weight file format.

mod arch;
mod io;
mod model;
mod train;

pub use arch::{CaeArchitecture, DecoderStage, EncoderStage, StageShape, DEPTH_CLASSES};
pub use io::{decode_weights, encode_weights, header_size, load_weights, save_weights, WEIGHTS_MAGIC, WEIGHTS_VERSION};
pub use model::{init_weights, CaeWeights, ForwardTrace};
pub use train::{
    evaluate_mse, train, train_with_progress, EpochRecord, TrainConfig, TrainingHistory, TrainingPair,
};

use thiserror::Error;

use crate::image::ImageError;
use crate::nn::NnError;

#[derive(Debug, Error)]
pub enum CaeError {
    #[error("unsupported depth class {0} (expected 5, 7 or 9)")]
    UnsupportedDepth(usize),
    #[error("invalid architecture: {0}")]
    InvalidArchitecture(String),
    #[error("invalid training configuration: {0}")]
    InvalidConfig(String),
    #[error("network input must be {expected:?} (channels, height, width), got {got:?}")]
    InputShape { expected: Vec<usize>, got: Vec<usize> },
    #[error("training pair {index}: frame {frame:?} and truth {truth:?} do not match the network input")]
    PairShape {
        index: usize,
        frame: (usize, usize),
        truth: (usize, usize),
    },
    #[error("training set is empty")]
    EmptyTrainingSet,
    #[error("non-finite loss at epoch {epoch}, batch {batch}")]
    NonFiniteLoss { epoch: usize, batch: usize },
    #[error("optimizer failed at epoch {epoch}, batch {batch}: {source}")]
    Optimizer {
        epoch: usize,
        batch: usize,
        source: NnError,
    },
    #[error("expected {expected} layers, got {got}")]
    LayerCount { expected: usize, got: usize },
    #[error("layer {layer}: expected kernel shape {expected:?}, got {got:?}")]
    LayerShape {
        layer: usize,
        expected: Vec<usize>,
        got: Vec<usize>,
    },
    #[error("not a CAEW weight file (bad magic)")]
    BadMagic,
    #[error("unsupported weight file version {0}")]
    UnsupportedVersion(u32),
    #[error("weight file truncated: need {expected} bytes, have {got}")]
    Truncated { expected: usize, got: usize },
    #[error("malformed weight file header: {0}")]
    BadHeader(String),
    #[error("{path}: {source}")]
    Io {
        path: String,
        source: std::io::Error,
    },
    #[error(transparent)]
    Nn(#[from] NnError),
    #[error(transparent)]
    Image(#[from] ImageError),
}
