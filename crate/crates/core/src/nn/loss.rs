use super::NnError;
use crate::tensor::{Real, Tensor};

/// Mean squared error over all elements, with gradient `2 (pred - target) / N`.
pub fn mse_loss<T: Real>(pred: &Tensor<T>, target: &Tensor<T>) -> Result<(T, Tensor<T>), NnError> {
    if pred.shape() != target.shape() {
        return Err(NnError::ShapeMismatch {
            what: "mse_loss",
            left: pred.shape().to_vec(),
            right: target.shape().to_vec(),
        });
    }
    let n = T::from_usize(pred.len().max(1)).unwrap();
    let two_over_n = T::lit(2.0) / n;
    let mut sum = T::zero();
    let grad = pred
        .data()
        .iter()
        .zip(target.data())
        .map(|(&p, &t)| {
            let d = p - t;
            sum += d * d;
            two_over_n * d
        })
        .collect();
    Ok((sum / n, Tensor::from_vec(pred.shape(), grad)?))
}
