//! Photon-limited imaging toolkit.
//!
//! Simulates gated single-photon camera frames of small grayscale objects
//! and reconstructs the objects two ways: a total-variation regularised
//! Poisson solver and a convolutional auto-encoder trained on
//! (frame, object) pairs. Metrics compare the two by contrast and MSE.

pub mod cae;
pub mod dataset;
pub mod glyphs;
pub mod gradcheck;
pub mod image;
pub mod imageio;
pub mod metrics;
pub mod nn;
pub mod photon_sim;
pub mod rng;
pub mod tensor;
pub mod tv;

pub use image::{CountMap, GroundTruthImage, Image, RawFrame, IMAGE_SIDE};
pub use tensor::{Real, Tensor};
