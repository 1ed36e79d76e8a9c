use super::NnError;
use crate::tensor::{Real, Tensor};

fn check_target(h: usize, w: usize, th: usize, tw: usize) -> Result<(), NnError> {
    let ok = |n: usize, t: usize| n > 0 && (t == 2 * n || t + 1 == 2 * n);
    if ok(h, th) && ok(w, tw) {
        Ok(())
    } else {
        Err(NnError::UpsampleTarget {
            h,
            w,
            target_h: th,
            target_w: tw,
        })
    }
}

/// Nearest-neighbour 2x replication cropped at the trailing edge to
/// `target_h x target_w`. Inverts the spatial effect of ceil-mode halving.
pub fn upsample_nearest_to<T: Real>(
    input: &Tensor<T>,
    target_h: usize,
    target_w: usize,
) -> Result<Tensor<T>, NnError> {
    let [b, c, h, w] = input.dims4()?;
    check_target(h, w, target_h, target_w)?;
    let mut out = Tensor::zeros(&[b, c, target_h, target_w]);
    let src = input.data();
    let dst = out.data_mut();
    for plane in 0..b * c {
        let s = &src[plane * h * w..(plane + 1) * h * w];
        let d = &mut dst[plane * target_h * target_w..(plane + 1) * target_h * target_w];
        for y in 0..target_h {
            let srow = &s[(y / 2) * w..(y / 2 + 1) * w];
            for (x, v) in d[y * target_w..(y + 1) * target_w].iter_mut().enumerate() {
                *v = srow[x / 2];
            }
        }
    }
    Ok(out)
}

/// Adjoint of [`upsample_nearest_to`]: sums each output gradient into its source pixel.
pub fn upsample_nearest_backward<T: Real>(
    grad_out: &Tensor<T>,
    input_h: usize,
    input_w: usize,
) -> Result<Tensor<T>, NnError> {
    let [b, c, th, tw] = grad_out.dims4()?;
    check_target(input_h, input_w, th, tw)?;
    let mut grad_in = Tensor::zeros(&[b, c, input_h, input_w]);
    let src = grad_out.data();
    let dst = grad_in.data_mut();
    for plane in 0..b * c {
        let s = &src[plane * th * tw..(plane + 1) * th * tw];
        let d = &mut dst[plane * input_h * input_w..(plane + 1) * input_h * input_w];
        for y in 0..th {
            for x in 0..tw {
                d[(y / 2) * input_w + x / 2] += s[y * tw + x];
            }
        }
    }
    Ok(grad_in)
}
