//! Total-variation regularised Poisson reconstruction.

mod ops;
mod prox;
mod solver;

pub use ops::{poisson_nll, tv_seminorm};
pub use prox::{tv_prox, tv_prox_warm, TvDual};
pub use solver::{composite_objective, grid_search_weight, reconstruct_tv, reconstruct_tv_image, SolveTrace, StopReason, TraceRow};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::image::ImageError;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum TvError {
    #[error("invalid TV configuration: {0}")]
    InvalidConfig(String),
    #[error("estimate pixel {index} is negative ({value})")]
    NegativeEstimate { index: usize, value: f64 },
    #[error("estimate is {x:?} but counts are {y:?}")]
    SizeMismatch { x: (usize, usize), y: (usize, usize) },
    #[error(transparent)]
    Counts(#[from] ImageError),
}

/// Candidate regularisation weights searched when picking the default.
pub const TV_WEIGHT_GRID: [f64; 4] = [0.01, 0.05, 0.1, 0.5];

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TvConfig {
    pub tv_weight: f64,
    /// Constant offset added to the modelled mean; keeps the log finite at zero.
    pub background: f64,
    /// Counts per unit of estimated intensity.
    pub gain: f64,
    pub max_outer_iters: usize,
    pub min_outer_iters: usize,
    pub inner_iters: usize,
    /// Stop once the relative objective change drops below this.
    pub tolerance: f64,
    pub alpha_init: f64,
    pub alpha_min: f64,
    pub alpha_max: f64,
    pub backtrack_factor: f64,
    pub sufficient_decrease: f64,
}

impl Default for TvConfig {
    fn default() -> Self {
        Self {
            tv_weight: DEFAULT_TV_WEIGHT,
            background: 0.01,
            gain: 1.0,
            max_outer_iters: 100,
            min_outer_iters: 5,
            inner_iters: 50,
            tolerance: 1e-6,
            alpha_init: 1.0,
            alpha_min: 1e-30,
            alpha_max: 1e30,
            backtrack_factor: 2.0,
            sufficient_decrease: 0.1,
        }
    }
}

/// Winner of the validation grid search over [`TV_WEIGHT_GRID`].
pub const DEFAULT_TV_WEIGHT: f64 = 0.5;

impl TvConfig {
    pub fn validate(&self) -> Result<(), TvError> {
        let fail = |m: &str| Err(TvError::InvalidConfig(m.to_string()));
        if !(self.tv_weight >= 0.0) {
            return fail("tv_weight must be >= 0");
        }
        if !(self.background > 0.0) {
            return fail("background must be > 0");
        }
        if !(self.gain > 0.0) {
            return fail("gain must be > 0");
        }
        if self.max_outer_iters < 1 || self.inner_iters < 1 {
            return fail("iteration counts must be >= 1");
        }
        if !(self.alpha_min > 0.0 && self.alpha_min <= self.alpha_init && self.alpha_init <= self.alpha_max) {
            return fail("need 0 < alpha_min <= alpha_init <= alpha_max");
        }
        if !(self.backtrack_factor > 1.0) {
            return fail("backtrack_factor must be > 1");
        }
        if !(self.sufficient_decrease > 0.0 && self.sufficient_decrease < 1.0) {
            return fail("sufficient_decrease must be in (0, 1)");
        }
        if !(self.tolerance >= 0.0) {
            return fail("tolerance must be >= 0");
        }
        Ok(())
    }
}
