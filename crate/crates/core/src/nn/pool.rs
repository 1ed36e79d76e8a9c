use super::NnError;
use crate::tensor::{Real, Tensor};

/// Argmax bookkeeping from [`maxpool_2x2_ceil`]: one flat input index per output element.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct PoolIndices {
    input_shape: [usize; 4],
    output_shape: [usize; 4],
    argmax: Vec<usize>,
}

impl PoolIndices {
    pub fn input_shape(&self) -> [usize; 4] {
        self.input_shape
    }

    pub fn output_shape(&self) -> [usize; 4] {
        self.output_shape
    }

    pub fn argmax(&self) -> &[usize] {
        &self.argmax
    }
}

/// 2x2 max pooling with stride 2 in ceil mode: trailing odd rows/columns form
/// truncated windows, so an extent of 7 pools to 4. Ties go to the lowest flat index.
pub fn maxpool_2x2_ceil<T: Real>(input: &Tensor<T>) -> Result<(Tensor<T>, PoolIndices), NnError> {
    let [b, c, h, w] = input.dims4()?;
    if h == 0 || w == 0 {
        return Err(NnError::EmptySpatial { what: "maxpool", h, w });
    }
    let (oh, ow) = (h.div_ceil(2), w.div_ceil(2));
    let mut out = Tensor::zeros(&[b, c, oh, ow]);
    let mut argmax = Vec::with_capacity(b * c * oh * ow);
    let src = input.data();
    let dst = out.data_mut();
    for plane in 0..b * c {
        let base = plane * h * w;
        for oy in 0..oh {
            for ox in 0..ow {
                let mut best = base + 2 * oy * w + 2 * ox;
                for y in 2 * oy..(2 * oy + 2).min(h) {
                    for x in 2 * ox..(2 * ox + 2).min(w) {
                        let idx = base + y * w + x;
                        if src[idx] > src[best] {
                            best = idx;
                        }
                    }
                }
                dst[argmax.len()] = src[best];
                argmax.push(best);
            }
        }
    }
    Ok((
        out,
        PoolIndices {
            input_shape: [b, c, h, w],
            output_shape: [b, c, oh, ow],
            argmax,
        },
    ))
}

/// Routes each upstream gradient to the argmax position recorded by the forward pass.
pub fn maxpool_backward<T: Real>(grad_out: &Tensor<T>, indices: &PoolIndices) -> Result<Tensor<T>, NnError> {
    if grad_out.shape() != indices.output_shape {
        return Err(NnError::StaleIndices {
            recorded: indices.output_shape.to_vec(),
            got: grad_out.shape().to_vec(),
        });
    }
    let mut grad_in = Tensor::zeros(&indices.input_shape);
    let gi = grad_in.data_mut();
    for (&idx, &g) in indices.argmax.iter().zip(grad_out.data()) {
        gi[idx] += g;
    }
    Ok(grad_in)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn single_window() {
        let x = Tensor::<f64>::from_vec(&[1, 1, 2, 2], vec![1.0, 2.0, 3.0, 4.0]).unwrap();
        let (y, idx) = maxpool_2x2_ceil(&x).unwrap();
        assert_eq!(y.data(), &[4.0]);
        let g = maxpool_backward(&Tensor::full(&[1, 1, 1, 1], 1.0), &idx).unwrap();
        assert_eq!(g.data(), &[0.0, 0.0, 0.0, 1.0]);
        let z = maxpool_backward(&Tensor::<f64>::zeros(&[1, 1, 1, 1]), &idx).unwrap();
        assert!(z.data().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn ceil_mode_shapes() {
        for (n, m) in [(28, 14), (14, 7), (7, 4), (4, 2), (1, 1), (9, 5)] {
            let (y, _) = maxpool_2x2_ceil(&Tensor::<f32>::zeros(&[1, 1, n, n])).unwrap();
            assert_eq!(y.shape(), &[1, 1, m, m]);
        }
    }

    #[test]
    fn ties_pick_lowest_index() {
        let x = Tensor::<f64>::full(&[1, 1, 2, 2], 0.5);
        let (_, idx) = maxpool_2x2_ceil(&x).unwrap();
        assert_eq!(idx.argmax(), &[0]);
    }

    #[test]
    fn brute_force_window_max() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        for &(h, w) in &[(9usize, 9usize), (7, 4), (5, 8), (1, 3)] {
            let n = 2 * h * w;
            let x = Tensor::<f64>::from_vec(
                &[1, 2, h, w],
                (0..n).map(|_| rng.random_range(-1.0..1.0)).collect(),
            )
            .unwrap();
            let (y, _) = maxpool_2x2_ceil(&x).unwrap();
            let (oh, ow) = (h.div_ceil(2), w.div_ceil(2));
            for c in 0..2 {
                for oy in 0..oh {
                    for ox in 0..ow {
                        let mut m = f64::NEG_INFINITY;
                        for dy in 0..2 {
                            for dx in 0..2 {
                                let (yy, xx) = (2 * oy + dy, 2 * ox + dx);
                                if yy < h && xx < w {
                                    m = m.max(x.data()[(c * h + yy) * w + xx]);
                                }
                            }
                        }
                        assert_eq!(y.data()[(c * oh + oy) * ow + ox], m);
                    }
                }
            }
        }
    }

    #[test]
    fn stale_indices_rejected() {
        let (_, idx) = maxpool_2x2_ceil(&Tensor::<f32>::zeros(&[1, 1, 4, 4])).unwrap();
        let err = maxpool_backward(&Tensor::<f32>::zeros(&[1, 1, 3, 3]), &idx).unwrap_err();
        assert!(matches!(err, NnError::StaleIndices { .. }));
    }
}
