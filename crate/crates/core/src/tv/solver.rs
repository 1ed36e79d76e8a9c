use super::ops::{nll_raw, tv_raw};
use super::prox::{tv_prox_warm, TvDual};
use super::{TvConfig, TvError};
use crate::image::{CountMap, Image};

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct TraceRow {
    pub iteration: usize,
    pub objective: f64,
    /// Accepted step length `1 / alpha`.
    pub step: f64,
    pub backtracks: usize,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum StopReason {
    Converged,
    MaxIterations,
    /// No step satisfying the acceptance test was found below the curvature cap.
    Stalled,
}

#[derive(Clone, Debug, PartialEq)]
pub struct SolveTrace {
    /// Row 0 is the starting point.
    pub rows: Vec<TraceRow>,
    pub stop: StopReason,
}

impl SolveTrace {
    pub fn objectives(&self) -> Vec<f64> {
        self.rows.iter().map(|r| r.objective).collect()
    }

    pub fn to_csv(&self) -> String {
        let mut s = String::from("iteration,objective,step,backtracks\n");
        for r in &self.rows {
            s.push_str(&format!(
                "{},{:.12e},{:.6e},{}\n",
                r.iteration, r.objective, r.step, r.backtracks
            ));
        }
        s
    }
}

/// Poisson likelihood plus weighted TV, for a nonnegative estimate.
pub fn composite_objective(x: &Image, y: &CountMap, cfg: &TvConfig) -> f64 {
    nll_raw(x.data(), y.counts(), cfg.gain, cfg.background, None)
        + cfg.tv_weight * tv_raw(x.data(), x.height(), x.width())
}

/// Minimises `NLL(x; y) + tv_weight * TV(x)` over `x >= 0`.
///
/// Each outer iteration takes a gradient step on the likelihood with a
/// Barzilai-Borwein curvature estimate `alpha`, applies the TV proximal map
/// with weight `tv_weight / alpha` and clips to the nonnegative orthant.
/// `alpha` grows geometrically until the candidate passes the sufficient
/// decrease test `Phi(z) <= Phi(x) - sigma * alpha / 2 * |z - x|^2`, so
/// accepted objectives never increase.
pub fn reconstruct_tv(y: &CountMap, cfg: &TvConfig) -> Result<(Image, SolveTrace), TvError> {
    cfg.validate()?;
    let (h, w) = (y.height(), y.width());
    let n = h * w;
    let yc = y.counts();
    let gain = cfg.gain;
    let b = cfg.background;

    let mut x = Image::new(h, w, yc.iter().map(|&c| c as f64 / gain).collect()).expect("size");
    let mut grad = vec![0.0; n];
    let mut phi = nll_raw(x.data(), yc, gain, b, Some(&mut grad)) + cfg.tv_weight * tv_raw(x.data(), h, w);
    let mut alpha = cfg.alpha_init;
    let mut dual = TvDual::new(n);
    let mut rows = vec![TraceRow {
        iteration: 0,
        objective: phi,
        step: 0.0,
        backtracks: 0,
    }];
    let mut stop = StopReason::MaxIterations;
    let mut new_grad = vec![0.0; n];

    for iteration in 1..=cfg.max_outer_iters {
        let mut backtracks = 0;
        let accepted = loop {
            let s = Image::new(
                h,
                w,
                x.data().iter().zip(&grad).map(|(&xi, &gi)| xi - gi / alpha).collect(),
            )
            .expect("size");
            let mut trial_dual = dual.clone();
            let mut z = tv_prox_warm(&s, cfg.tv_weight / alpha, cfg.inner_iters, &mut trial_dual);
            z.data_mut().iter_mut().for_each(|v| *v = v.max(0.0));
            let phi_z = nll_raw(z.data(), yc, gain, b, None) + cfg.tv_weight * tv_raw(z.data(), h, w);
            let dist2: f64 = z.data().iter().zip(x.data()).map(|(a, c)| (a - c).powi(2)).sum();
            if phi_z <= phi - 0.5 * cfg.sufficient_decrease * alpha * dist2 {
                dual = trial_dual;
                break Some((z, phi_z, dist2));
            }
            alpha *= cfg.backtrack_factor;
            backtracks += 1;
            if alpha > cfg.alpha_max {
                break None;
            }
        };
        let Some((z, phi_z, dist2)) = accepted else {
            stop = StopReason::Stalled;
            break;
        };
        rows.push(TraceRow {
            iteration,
            objective: phi_z,
            step: 1.0 / alpha,
            backtracks,
        });

        nll_raw(z.data(), yc, gain, b, Some(&mut new_grad));
        let curvature: f64 = z
            .data()
            .iter()
            .zip(x.data())
            .zip(new_grad.iter().zip(&grad))
            .map(|((zi, xi), (gn, go))| (zi - xi) * (gn - go))
            .sum();
        let rel_change = (phi - phi_z).abs() / phi.abs().max(f64::MIN_POSITIVE);
        x = z;
        std::mem::swap(&mut grad, &mut new_grad);
        phi = phi_z;

        if dist2 == 0.0 || (iteration >= cfg.min_outer_iters && rel_change < cfg.tolerance) {
            stop = StopReason::Converged;
            break;
        }
        alpha = if curvature > 0.0 {
            (curvature / dist2).clamp(cfg.alpha_min, cfg.alpha_max)
        } else {
            cfg.alpha_min
        };
    }
    Ok((x, SolveTrace { rows, stop }))
}

/// Validates that `y` holds nonnegative integer counts, then solves.
pub fn reconstruct_tv_image(y: &Image, cfg: &TvConfig) -> Result<(Image, SolveTrace), TvError> {
    let counts = CountMap::from_image(y)?;
    reconstruct_tv(&counts, cfg)
}

/// Mean reconstruction MSE against `truths` for each candidate weight;
/// returns the best weight (first on ties) and the full score table.
pub fn grid_search_weight(
    frames: &[CountMap],
    truths: &[Image],
    grid: &[f64],
    base: &TvConfig,
) -> Result<(f64, Vec<(f64, f64)>), TvError> {
    use rayon::prelude::*;
    if frames.len() != truths.len() || frames.is_empty() || grid.is_empty() {
        return Err(TvError::InvalidConfig(
            "grid search needs a nonempty grid and matching nonempty frame/truth lists".into(),
        ));
    }
    let mut scores = Vec::with_capacity(grid.len());
    for &weight in grid {
        let cfg = TvConfig {
            tv_weight: weight,
            ..base.clone()
        };
        let errs = frames
            .par_iter()
            .zip(truths)
            .map(|(y, t)| {
                let (x, _) = reconstruct_tv(y, &cfg)?;
                if !x.same_size(t) {
                    return Err(TvError::SizeMismatch {
                        x: (t.height(), t.width()),
                        y: (y.height(), y.width()),
                    });
                }
                Ok(x.data().iter().zip(t.data()).map(|(a, b)| (a - b).powi(2)).sum::<f64>() / t.data().len() as f64)
            })
            .collect::<Result<Vec<f64>, TvError>>()?;
        scores.push((weight, errs.iter().sum::<f64>() / errs.len() as f64));
    }
    let best = scores
        .iter()
        .fold(scores[0], |b, &s| if s.1 < b.1 { s } else { b })
        .0;
    Ok((best, scores))
}
