use serde::{Deserialize, Serialize};

use super::NnError;
use crate::tensor::{Real, Tensor};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct AdamConfig {
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        Self {
            learning_rate: 1e-3,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
        }
    }
}

/// Moment accumulators for a fixed, ordered list of parameter tensors.
#[derive(Clone, Debug)]
pub struct AdamState<T> {
    config: AdamConfig,
    labels: Vec<String>,
    first: Vec<Tensor<T>>,
    second: Vec<Tensor<T>>,
    step: u64,
}

impl<T: Real> AdamState<T> {
    /// Zero-initialised state for parameters with the given labels and shapes.
    pub fn new(config: AdamConfig, params: &[(String, Vec<usize>)]) -> Self {
        Self {
            config,
            labels: params.iter().map(|(l, _)| l.clone()).collect(),
            first: params.iter().map(|(_, s)| Tensor::zeros(s)).collect(),
            second: params.iter().map(|(_, s)| Tensor::zeros(s)).collect(),
            step: 0,
        }
    }

    pub fn step(&self) -> u64 {
        self.step
    }

    pub fn config(&self) -> &AdamConfig {
        &self.config
    }

    pub fn first_moments(&self) -> &[Tensor<T>] {
        &self.first
    }

    pub fn second_moments(&self) -> &[Tensor<T>] {
        &self.second
    }
}

/// One bias-corrected Adam update. Gradients are validated before any
/// parameter is touched, so a rejected step leaves everything unchanged.
pub fn adam_step<T: Real>(
    params: &mut [&mut Tensor<T>],
    grads: &[&Tensor<T>],
    state: &mut AdamState<T>,
) -> Result<(), NnError> {
    let n = state.labels.len();
    if params.len() != n || grads.len() != n {
        return Err(NnError::ParamCount {
            expected: n,
            got: params.len().min(grads.len()),
        });
    }
    for i in 0..n {
        let expected = state.first[i].shape();
        for other in [params[i].shape(), grads[i].shape()] {
            if other != expected {
                return Err(NnError::ShapeMismatch {
                    what: "adam_step",
                    left: other.to_vec(),
                    right: expected.to_vec(),
                });
            }
        }
        if !grads[i].all_finite() {
            return Err(NnError::NonFiniteGradient {
                param: state.labels[i].clone(),
            });
        }
    }

    state.step += 1;
    let cfg = state.config;
    let t = state.step as i32;
    let lr = T::lit(cfg.learning_rate);
    let b1 = T::lit(cfg.beta1);
    let b2 = T::lit(cfg.beta2);
    let eps = T::lit(cfg.epsilon);
    let c1 = T::one() - T::lit(cfg.beta1.powi(t));
    let c2 = T::one() - T::lit(cfg.beta2.powi(t));
    for i in 0..n {
        let p = params[i].data_mut();
        let g = grads[i].data();
        let m = state.first[i].data_mut();
        let v = state.second[i].data_mut();
        for j in 0..p.len() {
            m[j] = b1 * m[j] + (T::one() - b1) * g[j];
            v[j] = b2 * v[j] + (T::one() - b2) * g[j] * g[j];
            let m_hat = m[j] / c1;
            let v_hat = v[j] / c2;
            p[j] -= lr * m_hat / (v_hat.sqrt() + eps);
        }
    }
    Ok(())
}
