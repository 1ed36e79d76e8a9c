use super::NnError;
use crate::tensor::{Real, Tensor};

pub fn relu<T: Real>(x: &Tensor<T>) -> Tensor<T> {
    x.map(|v| if v > T::zero() { v } else { T::zero() })
}

/// Backward pass from the stored activation `out = relu(x)`. The subgradient at 0 is 0.
pub fn relu_backward<T: Real>(grad_out: &Tensor<T>, out: &Tensor<T>) -> Result<Tensor<T>, NnError> {
    zip_with(grad_out, out, "relu_backward", |g, y| if y > T::zero() { g } else { T::zero() })
}

pub fn sigmoid<T: Real>(x: &Tensor<T>) -> Tensor<T> {
    x.map(|v| T::one() / (T::one() + (-v).exp()))
}

/// Backward pass from the stored activation `out = sigmoid(x)`.
pub fn sigmoid_backward<T: Real>(grad_out: &Tensor<T>, out: &Tensor<T>) -> Result<Tensor<T>, NnError> {
    zip_with(grad_out, out, "sigmoid_backward", |g, s| g * s * (T::one() - s))
}

fn zip_with<T: Real>(
    a: &Tensor<T>,
    b: &Tensor<T>,
    what: &'static str,
    f: impl Fn(T, T) -> T,
) -> Result<Tensor<T>, NnError> {
    if a.shape() != b.shape() {
        return Err(NnError::ShapeMismatch {
            what,
            left: a.shape().to_vec(),
            right: b.shape().to_vec(),
        });
    }
    let data = a.data().iter().zip(b.data()).map(|(&x, &y)| f(x, y)).collect();
    Tensor::from_vec(a.shape(), data)
}
