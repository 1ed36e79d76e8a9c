use super::ops::{divergence, gradient};
use crate::image::Image;

/// Dual field for the TV proximal map; carrying it between calls warm-starts the iteration.
#[derive(Clone, Debug, Default)]
pub struct TvDual {
    ph: Vec<f64>,
    pw: Vec<f64>,
}

impl TvDual {
    pub fn new(len: usize) -> Self {
        Self {
            ph: vec![0.0; len],
            pw: vec![0.0; len],
        }
    }

    fn ensure(&mut self, len: usize) {
        if self.ph.len() != len {
            *self = Self::new(len);
        }
    }
}

/// Chambolle's dual step; 1/8 is the provably convergent bound for this difference stencil.
const DUAL_STEP: f64 = 0.125;

/// Approximates `argmin_x 0.5 |x - v|^2 + weight * TV(x)` with
/// `inner_iters` dual projection iterations. No sign constraint is applied.
pub fn tv_prox(v: &Image, weight: f64, inner_iters: usize) -> Image {
    let mut dual = TvDual::new(v.data().len());
    tv_prox_warm(v, weight, inner_iters, &mut dual)
}

pub fn tv_prox_warm(v: &Image, weight: f64, inner_iters: usize, dual: &mut TvDual) -> Image {
    if weight <= 0.0 {
        return v.clone();
    }
    let (h, w) = (v.height(), v.width());
    let n = h * w;
    dual.ensure(n);
    let vd = v.data();
    let inv_weight = 1.0 / weight;
    let mut div = vec![0.0; n];
    let mut u = vec![0.0; n];
    let mut gh = vec![0.0; n];
    let mut gw = vec![0.0; n];
    for _ in 0..inner_iters {
        divergence(&dual.ph, &dual.pw, h, w, &mut div);
        for i in 0..n {
            u[i] = div[i] - vd[i] * inv_weight;
        }
        gradient(&u, h, w, &mut gh, &mut gw);
        for i in 0..n {
            let norm = (gh[i] * gh[i] + gw[i] * gw[i]).sqrt();
            let denom = 1.0 + DUAL_STEP * norm;
            dual.ph[i] = (dual.ph[i] + DUAL_STEP * gh[i]) / denom;
            dual.pw[i] = (dual.pw[i] + DUAL_STEP * gw[i]) / denom;
        }
    }
    divergence(&dual.ph, &dual.pw, h, w, &mut div);
    let data = vd.iter().zip(&div).map(|(&vi, &d)| vi - weight * d).collect();
    Image::new(h, w, data).expect("same size")
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tv::ops::tv_raw;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn objective(x: &[f64], v: &[f64], weight: f64, h: usize, w: usize) -> f64 {
        0.5 * x.iter().zip(v).map(|(a, b)| (a - b).powi(2)).sum::<f64>() + weight * tv_raw(x, h, w)
    }

    /// Subgradient descent with 1/k steps, keeping the best iterate.
    fn subgradient_oracle(v: &[f64], weight: f64, h: usize, w: usize, iters: usize) -> f64 {
        let mut x = v.to_vec();
        let mut best = objective(&x, v, weight, h, w);
        let mut g = vec![0.0; x.len()];
        for k in 1..=iters {
            for (gi, (xi, vi)) in g.iter_mut().zip(x.iter().zip(v)) {
                *gi = xi - vi;
            }
            for r in 0..h {
                for c in 0..w {
                    let i = r * w + c;
                    let a = if r + 1 < h { x[i + w] - x[i] } else { 0.0 };
                    let b = if c + 1 < w { x[i + 1] - x[i] } else { 0.0 };
                    let n = a.hypot(b);
                    if n > 0.0 {
                        let (sa, sb) = (weight * a / n, weight * b / n);
                        g[i] -= sa + sb;
                        if r + 1 < h {
                            g[i + w] += sa;
                        }
                        if c + 1 < w {
                            g[i + 1] += sb;
                        }
                    }
                }
            }
            let step = 0.5 / k as f64;
            for (xi, gi) in x.iter_mut().zip(&g) {
                *xi -= step * gi;
            }
            best = best.min(objective(&x, v, weight, h, w));
        }
        best
    }

    #[test]
    fn zero_weight_is_identity() {
        let v = Image::from_fn(5, 5, |r, c| (r * 5 + c) as f64 * 0.1 - 1.0);
        assert_eq!(tv_prox(&v, 0.0, 100), v);
    }

    #[test]
    fn constant_input_unchanged() {
        let v = Image::filled(6, 6, 0.42);
        let x = tv_prox(&v, 3.0, 200);
        assert!(x.data().iter().all(|&a| (a - 0.42).abs() < 1e-12));
    }

    #[test]
    fn noisy_step_matches_subgradient_oracle() {
        let mut rng = ChaCha8Rng::seed_from_u64(21);
        let v = Image::from_fn(8, 8, |_, c| if c >= 4 { 1.0 } else { 0.0 } + rng.random_range(-0.2..0.2));
        let x = tv_prox(&v, 0.2, 5000);
        let ours = objective(x.data(), v.data(), 0.2, 8, 8);
        let oracle = subgradient_oracle(v.data(), 0.2, 8, 8, 400_000);
        assert!((ours - oracle).abs() < 1e-3, "prox {ours} vs oracle {oracle}");
        assert!(ours <= oracle + 1e-6);
    }

    #[test]
    fn non_expansive() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        for _ in 0..10 {
            let u = Image::from_fn(10, 10, |_, _| rng.random_range(-1.0..1.0));
            let v = Image::from_fn(10, 10, |_, _| rng.random_range(-1.0..1.0));
            let weight = rng.random_range(0.05..1.0);
            let pu = tv_prox(&u, weight, 2000);
            let pv = tv_prox(&v, weight, 2000);
            let d_in: f64 = u.data().iter().zip(v.data()).map(|(a, b)| (a - b).powi(2)).sum::<f64>().sqrt();
            let d_out: f64 = pu.data().iter().zip(pv.data()).map(|(a, b)| (a - b).powi(2)).sum::<f64>().sqrt();
            assert!(d_out <= d_in + 1e-9, "{d_out} > {d_in}");
        }
    }

    #[test]
    fn larger_weight_lowers_tv() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let v = Image::from_fn(12, 12, |_, _| rng.random_range(0.0..1.0));
        let mut last = f64::INFINITY;
        for weight in [0.0, 0.05, 0.2, 1.0, 5.0] {
            let tv = tv_raw(tv_prox(&v, weight, 1000).data(), 12, 12);
            assert!(tv <= last + 1e-9);
            last = tv;
        }
    }
}
