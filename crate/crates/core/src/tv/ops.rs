use super::{TvConfig, TvError};
use crate::image::{CountMap, Image};

/// Forward differences `(dh, dw)` with zero one-sided difference on the last row/column.
pub(crate) fn gradient(x: &[f64], h: usize, w: usize, dh: &mut [f64], dw: &mut [f64]) {
    for r in 0..h {
        for c in 0..w {
            let i = r * w + c;
            dh[i] = if r + 1 < h { x[i + w] - x[i] } else { 0.0 };
            dw[i] = if c + 1 < w { x[i + 1] - x[i] } else { 0.0 };
        }
    }
}

/// Negative adjoint of [`gradient`].
pub(crate) fn divergence(ph: &[f64], pw: &[f64], h: usize, w: usize, out: &mut [f64]) {
    for r in 0..h {
        for c in 0..w {
            let i = r * w + c;
            let mut v = 0.0;
            if r + 1 < h {
                v += ph[i];
            }
            if r > 0 {
                v -= ph[i - w];
            }
            if c + 1 < w {
                v += pw[i];
            }
            if c > 0 {
                v -= pw[i - 1];
            }
            out[i] = v;
        }
    }
}

/// Isotropic total variation: sum of forward-difference gradient magnitudes.
pub fn tv_seminorm(x: &Image) -> f64 {
    tv_raw(x.data(), x.height(), x.width())
}

pub(crate) fn tv_raw(x: &[f64], h: usize, w: usize) -> f64 {
    let mut total = 0.0;
    for r in 0..h {
        for c in 0..w {
            let i = r * w + c;
            let a = if r + 1 < h { x[i + w] - x[i] } else { 0.0 };
            let b = if c + 1 < w { x[i + 1] - x[i] } else { 0.0 };
            total += (a * a + b * b).sqrt();
        }
    }
    total
}

/// Poisson negative log-likelihood `sum(g x + b - y log(g x + b))` (constant
/// terms dropped) and its gradient `g (1 - y / (g x + b))`.
pub fn poisson_nll(x: &Image, y: &CountMap, cfg: &TvConfig) -> Result<(f64, Image), TvError> {
    if x.height() != y.height() || x.width() != y.width() {
        return Err(TvError::SizeMismatch {
            x: (x.height(), x.width()),
            y: (y.height(), y.width()),
        });
    }
    if let Some((index, &value)) = x.data().iter().enumerate().find(|(_, v)| !(**v >= 0.0)) {
        return Err(TvError::NegativeEstimate { index, value });
    }
    let mut grad = vec![0.0; x.data().len()];
    let value = nll_raw(x.data(), y.counts(), cfg.gain, cfg.background, Some(&mut grad));
    Ok((value, Image::new(x.height(), x.width(), grad).expect("same size")))
}

pub(crate) fn nll_raw(x: &[f64], y: &[u32], gain: f64, background: f64, grad: Option<&mut [f64]>) -> f64 {
    let mut total = 0.0;
    match grad {
        Some(g) => {
            for ((&xi, &yi), gi) in x.iter().zip(y).zip(g.iter_mut()) {
                let m = gain * xi + background;
                let yf = yi as f64;
                total += if yi == 0 { m } else { m - yf * m.ln() };
                *gi = gain * (1.0 - yf / m);
            }
        }
        None => {
            for (&xi, &yi) in x.iter().zip(y) {
                let m = gain * xi + background;
                total += if yi == 0 { m } else { m - yi as f64 * m.ln() };
            }
        }
    }
    total
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn tv_closed_forms() {
        assert_eq!(tv_seminorm(&Image::filled(28, 28, 0.7)), 0.0);
        let step = Image::from_fn(28, 28, |_, c| if c >= 14 { 1.0 } else { 0.0 });
        assert!((tv_seminorm(&step) - 28.0).abs() < 1e-12);
    }

    #[test]
    fn tv_matches_direct_formula() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let img = Image::from_fn(9, 13, |_, _| rng.random_range(0.0..1.0));
        let mut direct = 0.0;
        for r in 0..9 {
            for c in 0..13 {
                let dy = if r < 8 { img.get(r + 1, c) - img.get(r, c) } else { 0.0 };
                let dx = if c < 12 { img.get(r, c + 1) - img.get(r, c) } else { 0.0 };
                direct += dy.hypot(dx);
            }
        }
        assert!((tv_seminorm(&img) - direct).abs() < 1e-10);
    }

    #[test]
    fn divergence_is_negative_adjoint() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let (h, w) = (5, 7);
        let x: Vec<f64> = (0..h * w).map(|_| rng.random_range(-1.0..1.0)).collect();
        let ph: Vec<f64> = (0..h * w).map(|_| rng.random_range(-1.0..1.0)).collect();
        let pw: Vec<f64> = (0..h * w).map(|_| rng.random_range(-1.0..1.0)).collect();
        let (mut gh, mut gw, mut div) = (vec![0.0; h * w], vec![0.0; h * w], vec![0.0; h * w]);
        gradient(&x, h, w, &mut gh, &mut gw);
        divergence(&ph, &pw, h, w, &mut div);
        let lhs: f64 = gh.iter().zip(&ph).chain(gw.iter().zip(&pw)).map(|(a, b)| a * b).sum();
        let rhs: f64 = -x.iter().zip(&div).map(|(a, b)| a * b).sum::<f64>();
        assert!((lhs - rhs).abs() < 1e-12);
    }

    #[test]
    fn nll_closed_form_and_stationarity() {
        let cfg = TvConfig::default();
        let y = CountMap::new(28, 28, vec![0; 784]).unwrap();
        let (f, _) = poisson_nll(&Image::zeros(28, 28), &y, &cfg).unwrap();
        assert!((f - 7.84).abs() < 1e-12);

        let y = CountMap::new(1, 3, vec![1, 2, 5]).unwrap();
        let x = Image::new(1, 3, vec![1.0 - cfg.background, 2.0 - cfg.background, 0.3]).unwrap();
        let (_, g) = poisson_nll(&x, &y, &cfg).unwrap();
        assert!(g.data()[0].abs() < 1e-15);
        assert!(g.data()[1].abs() < 1e-15);
        assert!(g.data()[2] < 0.0);
    }

    #[test]
    fn nll_rejects_negative_estimate() {
        let y = CountMap::new(1, 2, vec![0, 1]).unwrap();
        let x = Image::new(1, 2, vec![0.5, -0.1]).unwrap();
        assert!(matches!(
            poisson_nll(&x, &y, &TvConfig::default()),
            Err(TvError::NegativeEstimate { index: 1, .. })
        ));
    }
}
