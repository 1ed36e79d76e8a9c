use super::NnError;
use crate::tensor::{matmul, Real, Tensor};

/// A 3x3 same-padding convolution: kernels `[out_ch, in_ch, 3, 3]`, bias `[out_ch]`.
#[derive(Clone, Debug, PartialEq)]
pub struct ConvLayer<T> {
    pub kernels: Tensor<T>,
    pub bias: Tensor<T>,
}

impl<T: Real> ConvLayer<T> {
    pub fn zeros(in_ch: usize, out_ch: usize) -> Self {
        Self {
            kernels: Tensor::zeros(&[out_ch, in_ch, 3, 3]),
            bias: Tensor::zeros(&[out_ch]),
        }
    }

    pub fn new(kernels: Tensor<T>, bias: Tensor<T>) -> Result<Self, NnError> {
        let [co, _, kh, kw] = kernels.dims4()?;
        if kh != 3 {
            return Err(NnError::Dimension {
                what: "conv kernel",
                dim: "height",
                got: kh,
                expected: 3,
            });
        }
        if kw != 3 {
            return Err(NnError::Dimension {
                what: "conv kernel",
                dim: "width",
                got: kw,
                expected: 3,
            });
        }
        if bias.shape() != [co] {
            return Err(NnError::ShapeMismatch {
                what: "conv bias",
                left: bias.shape().to_vec(),
                right: vec![co],
            });
        }
        Ok(Self { kernels, bias })
    }

    pub fn in_channels(&self) -> usize {
        self.kernels.shape()[1]
    }

    pub fn out_channels(&self) -> usize {
        self.kernels.shape()[0]
    }

    pub fn param_count(&self) -> usize {
        self.kernels.len() + self.bias.len()
    }
}

/// Input recorded by a forward pass for use by [`conv2d_backward`].
#[derive(Clone, Debug, Default)]
pub struct ConvCache<T> {
    input: Option<Tensor<T>>,
}

impl<T: Real> ConvCache<T> {
    pub fn empty() -> Self {
        Self { input: None }
    }

    pub fn from_input(input: Tensor<T>) -> Self {
        Self { input: Some(input) }
    }

    pub fn input(&self) -> Option<&Tensor<T>> {
        self.input.as_ref()
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct ConvGrads<T> {
    pub input: Tensor<T>,
    pub kernels: Tensor<T>,
    pub bias: Tensor<T>,
}

fn check_input<T: Real>(input: &Tensor<T>, layer: &ConvLayer<T>) -> Result<[usize; 4], NnError> {
    let [b, c, h, w] = input.dims4()?;
    if h == 0 || w == 0 {
        return Err(NnError::EmptySpatial { what: "conv2d", h, w });
    }
    if c != layer.in_channels() {
        return Err(NnError::Dimension {
            what: "conv2d input",
            dim: "channels",
            got: c,
            expected: layer.in_channels(),
        });
    }
    Ok([b, c, h, w])
}

/// Unfolds one `[c, h, w]` sample into `[c*9, h*w]` patch columns (zero padded).
fn im2col<T: Real>(src: &[T], c: usize, h: usize, w: usize, cols: &mut [T]) {
    let hw = h * w;
    for ch in 0..c {
        let plane = &src[ch * hw..(ch + 1) * hw];
        for ky in 0..3 {
            for kx in 0..3 {
                let row = &mut cols[((ch * 9) + ky * 3 + kx) * hw..][..hw];
                for y in 0..h {
                    let out = &mut row[y * w..(y + 1) * w];
                    let sy = y as isize + ky as isize - 1;
                    if sy < 0 || sy >= h as isize {
                        out.fill(T::zero());
                        continue;
                    }
                    let srow = &plane[sy as usize * w..(sy as usize + 1) * w];
                    match kx {
                        0 => {
                            out[0] = T::zero();
                            out[1..].copy_from_slice(&srow[..w - 1]);
                        }
                        1 => out.copy_from_slice(srow),
                        _ => {
                            out[..w - 1].copy_from_slice(&srow[1..]);
                            out[w - 1] = T::zero();
                        }
                    }
                }
            }
        }
    }
}

/// Layers with at most this many output channels use direct loops; GEMM
/// with so few rows spends most of its time packing the column buffer.
const DIRECT_MAX_OUT: usize = 4;

// The direct kernels work on planes padded by one pixel on every side and
// laid out with row stride `w + 2`. Output pixel `i = y * (w + 2) + x` then
// reads padded index `i + ky * (w + 2) + kx` for tap `(ky, kx)`, so each tap
// is one contiguous multiply-add over the whole plane. The two extra columns
// per row hold garbage (forward) or zeros (backward) and are cropped.

fn padded_len(h: usize, w: usize) -> usize {
    (h + 2) * (w + 2)
}

/// `c` padded planes plus two trailing elements so every tap slice stays in bounds.
fn pad_planes<T: Real>(src: &[T], c: usize, h: usize, w: usize) -> Vec<T> {
    let (hw, wp, plane) = (h * w, w + 2, padded_len(h, w));
    let mut out = vec![T::zero(); c * plane + 2];
    for ci in 0..c {
        for y in 0..h {
            let to = ci * plane + (y + 1) * wp + 1;
            out[to..to + w].copy_from_slice(&src[ci * hw + y * w..][..w]);
        }
    }
    out
}

/// Re-lays `[c, h, w]` planes with row stride `w + 2`, zero-filling the extra columns.
fn widen<T: Real>(src: &[T], c: usize, h: usize, w: usize) -> Vec<T> {
    let wp = w + 2;
    let mut out = vec![T::zero(); c * h * wp];
    for (dst, row) in out.chunks_exact_mut(wp).zip(src.chunks_exact(w)) {
        dst[..w].copy_from_slice(row);
    }
    out
}

fn axpy<T: Real>(dst: &mut [T], a: T, x: &[T]) {
    for (d, &v) in dst.iter_mut().zip(x) {
        *d += a * v;
    }
}

fn dot<T: Real>(a: &[T], b: &[T]) -> T {
    let mut acc = [T::zero(); 8];
    let (ca, cb) = (a.chunks_exact(8), b.chunks_exact(8));
    let tail: T = ca.remainder().iter().zip(cb.remainder()).map(|(&x, &y)| x * y).sum();
    for (xa, xb) in ca.zip(cb) {
        for l in 0..8 {
            acc[l] += xa[l] * xb[l];
        }
    }
    acc.iter().copied().sum::<T>() + tail
}

/// Unfolds one `[c, h, w]` sample into `[h*w, c*9]` patch rows (zero padded).
fn im2row<T: Real>(src: &[T], c: usize, h: usize, w: usize, rows: &mut [T]) {
    let (wp, plane) = (w + 2, padded_len(h, w));
    let padded = pad_planes(src, c, h, w);
    let k = c * 9;
    for y in 0..h {
        for x in 0..w {
            let row = &mut rows[(y * w + x) * k..][..k];
            let base = y * wp + x;
            for (ci, taps) in row.chunks_exact_mut(9).enumerate() {
                let p = &padded[ci * plane + base..];
                taps[0..3].copy_from_slice(&p[..3]);
                taps[3..6].copy_from_slice(&p[wp..wp + 3]);
                taps[6..9].copy_from_slice(&p[2 * wp..2 * wp + 3]);
            }
        }
    }
}

fn direct_forward<T: Real>(src: &[T], c: usize, h: usize, w: usize, kernels: &[T], co: usize, dst: &mut [T]) {
    let (hw, wp, plane) = (h * w, w + 2, padded_len(h, w));
    let n = h * wp;
    let padded = pad_planes(src, c, h, w);
    let mut acc = vec![T::zero(); n];
    for o in 0..co {
        acc.fill(T::zero());
        for ci in 0..c {
            for tap in 0..9 {
                let off = ci * plane + (tap / 3) * wp + tap % 3;
                axpy(&mut acc, kernels[(o * c + ci) * 9 + tap], &padded[off..off + n]);
            }
        }
        for (row, out) in acc.chunks_exact(wp).zip(dst[o * hw..(o + 1) * hw].chunks_exact_mut(w)) {
            out.copy_from_slice(&row[..w]);
        }
    }
}

fn direct_grad_kernels<T: Real>(g: &[T], src: &[T], c: usize, h: usize, w: usize, co: usize, grad_k: &mut [T]) {
    let (wp, plane) = (w + 2, padded_len(h, w));
    let n = h * wp;
    let padded = pad_planes(src, c, h, w);
    let gw = widen(g, co, h, w);
    for o in 0..co {
        let go = &gw[o * n..(o + 1) * n];
        for ci in 0..c {
            for tap in 0..9 {
                let off = ci * plane + (tap / 3) * wp + tap % 3;
                grad_k[(o * c + ci) * 9 + tap] += dot(go, &padded[off..off + n]);
            }
        }
    }
}

fn direct_grad_input<T: Real>(g: &[T], kernels: &[T], c: usize, h: usize, w: usize, co: usize, dst: &mut [T]) {
    let (hw, wp, plane) = (h * w, w + 2, padded_len(h, w));
    let n = h * wp;
    let gw = widen(g, co, h, w);
    let mut acc = vec![T::zero(); c * plane + 2];
    for o in 0..co {
        let go = &gw[o * n..(o + 1) * n];
        for ci in 0..c {
            for tap in 0..9 {
                let off = ci * plane + (tap / 3) * wp + tap % 3;
                axpy(&mut acc[off..off + n], kernels[(o * c + ci) * 9 + tap], go);
            }
        }
    }
    for ci in 0..c {
        for y in 0..h {
            let from = ci * plane + (y + 1) * wp + 1;
            dst[ci * hw + y * w..][..w].copy_from_slice(&acc[from..from + w]);
        }
    }
}

/// Kernels of the adjoint convolution: channels swapped, taps rotated 180 degrees.
fn flipped_kernels<T: Real>(kernels: &[T], c: usize, co: usize) -> Vec<T> {
    let mut out = vec![T::zero(); kernels.len()];
    for o in 0..co {
        for ci in 0..c {
            for tap in 0..9 {
                out[(ci * co + o) * 9 + 8 - tap] = kernels[(o * c + ci) * 9 + tap];
            }
        }
    }
    out
}

/// 3x3 cross-correlation with zero padding of width 1, plus per-channel bias.
/// Output spatial size equals the input's.
pub fn conv2d_same<T: Real>(input: &Tensor<T>, layer: &ConvLayer<T>) -> Result<Tensor<T>, NnError> {
    let [b, c, h, w] = check_input(input, layer)?;
    let co = layer.out_channels();
    let hw = h * w;
    let k = c * 9;
    let mut out = Tensor::zeros(&[b, co, h, w]);
    let direct = co <= DIRECT_MAX_OUT;
    let mut cols = if direct { Vec::new() } else { vec![T::zero(); k * hw] };
    for s in 0..b {
        let dst = out.sample_mut(s);
        if direct {
            direct_forward(input.sample(s), c, h, w, layer.kernels.data(), co, dst);
        } else {
            im2col(input.sample(s), c, h, w, &mut cols);
            matmul(false, false, co, hw, k, layer.kernels.data(), &cols, T::zero(), dst);
        }
        for (o, &bias) in layer.bias.data().iter().enumerate() {
            dst[o * hw..(o + 1) * hw].iter_mut().for_each(|v| *v += bias);
        }
    }
    Ok(out)
}

/// Exact gradients of [`conv2d_same`] given the upstream gradient and the
/// cached forward input.
pub fn conv2d_backward<T: Real>(
    grad_out: &Tensor<T>,
    cache: &ConvCache<T>,
    layer: &ConvLayer<T>,
) -> Result<ConvGrads<T>, NnError> {
    let (kernels, bias, input) = backward_impl(grad_out, cache, layer, true)?;
    Ok(ConvGrads {
        input: input.expect("requested"),
        kernels,
        bias,
    })
}

/// Kernel and bias gradients only, for a layer whose input needs no gradient.
pub fn conv2d_backward_params<T: Real>(
    grad_out: &Tensor<T>,
    cache: &ConvCache<T>,
    layer: &ConvLayer<T>,
) -> Result<(Tensor<T>, Tensor<T>), NnError> {
    let (kernels, bias, _) = backward_impl(grad_out, cache, layer, false)?;
    Ok((kernels, bias))
}

type BackwardParts<T> = (Tensor<T>, Tensor<T>, Option<Tensor<T>>);

fn backward_impl<T: Real>(
    grad_out: &Tensor<T>,
    cache: &ConvCache<T>,
    layer: &ConvLayer<T>,
    want_input: bool,
) -> Result<BackwardParts<T>, NnError> {
    let input = cache.input().ok_or(NnError::MissingCache)?;
    let [b, c, h, w] = check_input(input, layer)?;
    let co = layer.out_channels();
    if grad_out.shape() != [b, co, h, w] {
        return Err(NnError::ShapeMismatch {
            what: "conv2d_backward grad_out",
            left: grad_out.shape().to_vec(),
            right: vec![b, co, h, w],
        });
    }
    let hw = h * w;
    let k = c * 9;
    let direct = co <= DIRECT_MAX_OUT;
    let mut grad_k = Tensor::zeros(layer.kernels.shape());
    let mut grad_b = Tensor::zeros(&[co]);
    let mut grad_in = want_input.then(|| Tensor::zeros(input.shape()));
    let mut cols = if direct { Vec::new() } else { vec![T::zero(); k * hw] };
    let (flipped, mut gcols) = if direct || !want_input {
        (Vec::new(), Vec::new())
    } else {
        (flipped_kernels(layer.kernels.data(), c, co), vec![T::zero(); co * 9 * hw])
    };
    for s in 0..b {
        let g = grad_out.sample(s);
        for (o, gb) in grad_b.data_mut().iter_mut().enumerate() {
            *gb += g[o * hw..(o + 1) * hw].iter().copied().sum::<T>();
        }
        if direct {
            direct_grad_kernels(g, input.sample(s), c, h, w, co, grad_k.data_mut());
            if let Some(gi) = grad_in.as_mut() {
                direct_grad_input(g, layer.kernels.data(), c, h, w, co, gi.sample_mut(s));
            }
            continue;
        }
        im2row(input.sample(s), c, h, w, &mut cols);
        // dK += dY * rows
        matmul(false, false, co, k, hw, g, &cols, T::one(), grad_k.data_mut());
        if let Some(gi) = grad_in.as_mut() {
            // The input gradient is a same-padded convolution of dY with the flipped kernels.
            im2col(g, co, h, w, &mut gcols);
            matmul(false, false, c, hw, co * 9, &flipped, &gcols, T::zero(), gi.sample_mut(s));
        }
    }
    Ok((grad_k, grad_b, grad_in))
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random(shape: &[usize], rng: &mut ChaCha8Rng) -> Tensor<f64> {
        let n = shape.iter().product();
        Tensor::from_vec(shape, (0..n).map(|_| rng.random_range(-1.0..1.0)).collect()).unwrap()
    }

    /// Direct nested-loop cross-correlation.
    fn naive_conv(input: &Tensor<f64>, layer: &ConvLayer<f64>) -> Tensor<f64> {
        let [b, c, h, w] = input.dims4().unwrap();
        let co = layer.out_channels();
        let mut out = Tensor::zeros(&[b, co, h, w]);
        let kd = layer.kernels.data();
        for s in 0..b {
            for o in 0..co {
                for y in 0..h {
                    for x in 0..w {
                        let mut acc = layer.bias.data()[o];
                        for ci in 0..c {
                            for ky in 0..3 {
                                for kx in 0..3 {
                                    let iy = y as isize + ky as isize - 1;
                                    let ix = x as isize + kx as isize - 1;
                                    if iy < 0 || ix < 0 || iy >= h as isize || ix >= w as isize {
                                        continue;
                                    }
                                    let v = input.data()
                                        [((s * c + ci) * h + iy as usize) * w + ix as usize];
                                    acc += v * kd[((o * c + ci) * 3 + ky) * 3 + kx];
                                }
                            }
                        }
                        out.data_mut()[((s * co + o) * h + y) * w + x] = acc;
                    }
                }
            }
        }
        out
    }

    #[test]
    fn delta_kernel_is_identity() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let input = random(&[2, 1, 5, 6], &mut rng);
        let mut layer = ConvLayer::zeros(1, 1);
        layer.kernels.data_mut()[4] = 1.0;
        assert_eq!(conv2d_same(&input, &layer).unwrap(), input);
    }

    #[test]
    fn all_ones_sums() {
        let input = Tensor::<f64>::full(&[1, 1, 3, 3], 1.0);
        let layer = ConvLayer::new(Tensor::full(&[1, 1, 3, 3], 1.0), Tensor::zeros(&[1])).unwrap();
        let out = conv2d_same(&input, &layer).unwrap();
        assert_eq!(out.data()[4], 9.0);
        for corner in [0, 2, 6, 8] {
            assert_eq!(out.data()[corner], 4.0);
        }
        assert_eq!(out.data()[1], 6.0);
    }

    #[test]
    fn matches_naive_oracle() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let input = random(&[2, 3, 7, 7], &mut rng);
        let layer = ConvLayer::new(random(&[4, 3, 3, 3], &mut rng), random(&[4], &mut rng)).unwrap();
        let fast = conv2d_same(&input, &layer).unwrap();
        let slow = naive_conv(&input, &layer);
        for (a, b) in fast.data().iter().zip(slow.data()) {
            assert!((a - b).abs() <= 1e-6 * b.abs().max(1.0), "{a} vs {b}");
        }
        // f32 path against the same oracle
        let fast32 = conv2d_same(&input.cast::<f32>(), &ConvLayer {
            kernels: layer.kernels.cast(),
            bias: layer.bias.cast(),
        })
        .unwrap();
        for (a, b) in fast32.data().iter().zip(slow.data()) {
            assert!((*a as f64 - b).abs() <= 1e-5 * b.abs().max(1.0));
        }
    }

    #[test]
    fn single_pixel_and_thin_inputs() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for shape in [[1, 2, 1, 1], [1, 2, 1, 5], [1, 2, 4, 1]] {
            let input = random(&shape, &mut rng);
            let layer = ConvLayer::new(random(&[3, 2, 3, 3], &mut rng), random(&[3], &mut rng)).unwrap();
            let fast = conv2d_same(&input, &layer).unwrap();
            let slow = naive_conv(&input, &layer);
            for (a, b) in fast.data().iter().zip(slow.data()) {
                assert!((a - b).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn channel_mismatch_names_dimension() {
        let input = Tensor::<f32>::zeros(&[1, 2, 4, 4]);
        let layer = ConvLayer::zeros(3, 1);
        let err = conv2d_same(&input, &layer).unwrap_err();
        assert_eq!(
            err,
            NnError::Dimension {
                what: "conv2d input",
                dim: "channels",
                got: 2,
                expected: 3
            }
        );
        assert!(err.to_string().contains("channels"));
    }

    #[test]
    fn rejects_non_3x3_kernels() {
        let err = ConvLayer::<f32>::new(Tensor::zeros(&[1, 1, 5, 5]), Tensor::zeros(&[1])).unwrap_err();
        assert!(matches!(err, NnError::Dimension { dim: "height", got: 5, .. }));
    }

    #[test]
    fn backward_without_cache_errors() {
        let layer = ConvLayer::<f32>::zeros(1, 1);
        let g = Tensor::zeros(&[1, 1, 3, 3]);
        assert_eq!(
            conv2d_backward(&g, &ConvCache::empty(), &layer).unwrap_err(),
            NnError::MissingCache
        );
    }

    #[test]
    fn zero_upstream_gives_zero_grads() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let input = random(&[1, 2, 5, 5], &mut rng);
        let layer = ConvLayer::new(random(&[3, 2, 3, 3], &mut rng), random(&[3], &mut rng)).unwrap();
        let grads =
            conv2d_backward(&Tensor::zeros(&[1, 3, 5, 5]), &ConvCache::from_input(input), &layer).unwrap();
        assert!(grads.input.data().iter().all(|&v| v == 0.0));
        assert!(grads.kernels.data().iter().all(|&v| v == 0.0));
        assert!(grads.bias.data().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn sum_probe_gives_window_sums() {
        // d sum(out) / dK[o,c,ky,kx] = sum over output positions of the shifted input window.
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let input = random(&[1, 1, 4, 5], &mut rng);
        let layer = ConvLayer::new(random(&[1, 1, 3, 3], &mut rng), Tensor::zeros(&[1])).unwrap();
        let grads = conv2d_backward(
            &Tensor::full(&[1, 1, 4, 5], 1.0),
            &ConvCache::from_input(input.clone()),
            &layer,
        )
        .unwrap();
        for ky in 0..3 {
            for kx in 0..3 {
                let mut window = 0.0;
                for y in 0..4isize {
                    for x in 0..5isize {
                        let (iy, ix) = (y + ky as isize - 1, x + kx as isize - 1);
                        if (0..4).contains(&iy) && (0..5).contains(&ix) {
                            window += input.data()[(iy * 5 + ix) as usize];
                        }
                    }
                }
                assert!((grads.kernels.data()[ky * 3 + kx] - window).abs() < 1e-12);
            }
        }
        assert_eq!(grads.bias.data()[0], 20.0);
    }

    #[test]
    fn direct_and_gemm_paths_agree_with_oracle() {
        let mut rng = ChaCha8Rng::seed_from_u64(13);
        for co in [1, 4, 5, 8] {
            let input = random(&[2, 3, 6, 5], &mut rng);
            let layer = ConvLayer::new(random(&[co, 3, 3, 3], &mut rng), random(&[co], &mut rng)).unwrap();
            let fast = conv2d_same(&input, &layer).unwrap();
            let slow = naive_conv(&input, &layer);
            for (a, b) in fast.data().iter().zip(slow.data()) {
                assert!((a - b).abs() < 1e-12, "co {co}");
            }
            // <g, conv(x)> is linear in x, so its input gradient is the adjoint applied to g.
            let g = random(&[2, co, 6, 5], &mut rng);
            let grads = conv2d_backward(&g, &ConvCache::from_input(input.clone()), &layer).unwrap();
            let no_bias = ConvLayer::new(layer.kernels.clone(), Tensor::zeros(&[co])).unwrap();
            let probe = random(&[2, 3, 6, 5], &mut rng);
            let lhs: f64 = naive_conv(&probe, &no_bias).data().iter().zip(g.data()).map(|(a, b)| a * b).sum();
            let rhs: f64 = grads.input.data().iter().zip(probe.data()).map(|(a, b)| a * b).sum();
            assert!((lhs - rhs).abs() < 1e-10, "co {co}: {lhs} vs {rhs}");
            let (k, b) = conv2d_backward_params(&g, &ConvCache::from_input(input.clone()), &layer).unwrap();
            assert_eq!(k, grads.kernels);
            assert_eq!(b, grads.bias);
        }
    }
}
