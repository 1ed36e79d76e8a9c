//! Stochastic forward model of a gated photon-counting camera.
//!
//! Each pixel detects `Poisson(rate)` signal photons plus `Poisson(dark)`
//! spurious events; the intensifier output `gain * events + N(0, sigma_read)`
//! is compared against a threshold to produce a binary frame.

use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::image::{CountMap, GroundTruthImage, Image, RawFrame};
use crate::rng::{stream_rng, stream_seed};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SimError {
    #[error("Poisson rate must be finite and nonnegative, got {0}")]
    NegativeRate(f64),
    #[error("invalid camera model: {0}")]
    InvalidCamera(String),
    #[error("unknown camera preset `{0}`")]
    UnknownPreset(String),
    #[error("at least one frame is required")]
    NoFrames,
}

/// Camera and illumination parameters.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CameraModel {
    /// Mean detected photons per pixel per exposure, averaged over the image.
    pub mu: f64,
    /// Quantum efficiency; only used when converting to or from incident photon numbers.
    pub eta: f64,
    /// Mean dark events per pixel per exposure.
    pub dark: f64,
    /// Analog counts per detected event.
    pub gain: f64,
    /// Read-noise standard deviation in analog counts.
    pub sigma_read: f64,
    /// Binarisation level in analog counts.
    pub threshold: f64,
}

pub const PAPER_LIKE: &str = "paper-like";
pub const PAPER_LIKE_DIM: &str = "paper-like-dim";

impl CameraModel {
    /// Intensified-CMOS-like settings: 10% quantum efficiency, low read
    /// noise and dark rate, threshold at half a photon.
    pub fn paper_like(mu: f64) -> Self {
        Self {
            mu,
            eta: 0.1,
            dark: 0.01,
            gain: 1.0,
            sigma_read: 0.1,
            threshold: 0.5,
        }
    }

    /// `paper-like` at 1.6 photons/pixel, `paper-like-dim` at 0.8.
    pub fn preset(name: &str) -> Result<Self, SimError> {
        match name {
            PAPER_LIKE => Ok(Self::paper_like(1.6)),
            PAPER_LIKE_DIM => Ok(Self::paper_like(0.8)),
            other => Err(SimError::UnknownPreset(other.to_string())),
        }
    }

    pub fn validate(&self) -> Result<(), SimError> {
        let fail = |m: String| Err(SimError::InvalidCamera(m));
        let finite = [self.mu, self.eta, self.dark, self.gain, self.sigma_read, self.threshold]
            .iter()
            .all(|v| v.is_finite());
        if !finite {
            return fail("all parameters must be finite".into());
        }
        if self.mu < 0.0 {
            return fail(format!("mu must be >= 0, got {}", self.mu));
        }
        if !(0.0..=1.0).contains(&self.eta) {
            return fail(format!("eta must be in [0, 1], got {}", self.eta));
        }
        if self.dark < 0.0 {
            return fail(format!("dark rate must be >= 0, got {}", self.dark));
        }
        if self.gain <= 0.0 {
            return fail(format!("gain must be > 0, got {}", self.gain));
        }
        if self.sigma_read < 0.0 {
            return fail(format!("read noise must be >= 0, got {}", self.sigma_read));
        }
        Ok(())
    }

    /// Mean photons per pixel arriving at the sensor before quantum-efficiency losses.
    pub fn incident_mu(&self) -> f64 {
        if self.eta > 0.0 {
            self.mu / self.eta
        } else {
            f64::INFINITY
        }
    }

    /// Camera whose detected rate results from `incident_mu` photons per pixel at this efficiency.
    pub fn with_incident_mu(&self, incident_mu: f64) -> Self {
        Self {
            mu: incident_mu * self.eta,
            ..self.clone()
        }
    }
}

/// Per-pixel detected-photon rates scaled so the image average is `mu`.
/// An all-zero image yields all-zero rates.
pub fn flux_map(img: &GroundTruthImage, mu: f64) -> Image {
    let image = img.image();
    let mean = image.mean();
    let scale = if mean > 0.0 { mu / mean } else { 0.0 };
    let data = image.data().iter().map(|&v| v * scale).collect();
    Image::new(image.height(), image.width(), data).expect("same dimensions")
}

fn log_factorial(k: u64) -> f64 {
    const TABLE: [f64; 10] = [
        0.0,
        0.0,
        std::f64::consts::LN_2,
        1.791_759_469_228_055,
        3.178_053_830_347_945_7,
        4.787_491_742_782_046,
        6.579_251_212_010_101,
        8.525_161_361_065_415,
        10.604_602_902_745_25,
        12.801_827_480_081_469,
    ];
    if k < 10 {
        return TABLE[k as usize];
    }
    // Stirling series for ln Gamma(n), n = k + 1.
    let n = k as f64 + 1.0;
    let inv = 1.0 / n;
    let inv2 = inv * inv;
    (n - 0.5) * n.ln() - n
        + 0.5 * (2.0 * std::f64::consts::PI).ln()
        + inv * (1.0 / 12.0 - inv2 * (1.0 / 360.0 - inv2 * (1.0 / 1260.0 - inv2 / 1680.0)))
}

/// Exact Poisson draw: multiplication of uniforms below a rate of 30,
/// Hörmann's transformed rejection with squeeze (PTRS) above.
pub fn poisson_sample<R: Rng + ?Sized>(lambda: f64, rng: &mut R) -> Result<u64, SimError> {
    if !(lambda >= 0.0) || !lambda.is_finite() {
        return Err(SimError::NegativeRate(lambda));
    }
    if lambda == 0.0 {
        return Ok(0);
    }
    if lambda < 30.0 {
        let limit = (-lambda).exp();
        let mut k = 0u64;
        let mut p = rng.random::<f64>();
        while p > limit {
            k += 1;
            p *= rng.random::<f64>();
        }
        return Ok(k);
    }
    let slam = lambda.sqrt();
    let loglam = lambda.ln();
    let b = 0.931 + 2.53 * slam;
    let a = -0.059 + 0.02483 * b;
    let inv_alpha = 1.1239 + 1.1328 / (b - 3.4);
    let vr = 0.9277 - 3.6224 / (b - 2.0);
    loop {
        let u = rng.random::<f64>() - 0.5;
        let v = rng.random::<f64>();
        let us = 0.5 - u.abs();
        let k = ((2.0 * a / us + b) * u + lambda + 0.43).floor();
        if us >= 0.07 && v <= vr {
            return Ok(k as u64);
        }
        if k < 0.0 || (us < 0.013 && v > us) {
            continue;
        }
        let lhs = v.ln() + inv_alpha.ln() - (a / (us * us) + b).ln();
        if lhs <= -lambda + k * loglam - log_factorial(k as u64) {
            return Ok(k as u64);
        }
    }
}

/// Keeps each of `count` events independently with probability `p`.
pub fn binomial_thin<R: Rng + ?Sized>(count: u64, p: f64, rng: &mut R) -> u64 {
    (0..count).filter(|_| rng.random::<f64>() < p).count() as u64
}

/// One binary exposure of `img`, fully determined by `seed`.
pub fn simulate_frame(img: &GroundTruthImage, cam: &CameraModel, seed: u64) -> Result<RawFrame, SimError> {
    cam.validate()?;
    let flux = flux_map(img, cam.mu);
    let mut rng = stream_rng(seed);
    let mut bits = Vec::with_capacity(flux.data().len());
    for &rate in flux.data() {
        let signal = poisson_sample(rate, &mut rng)?;
        let dark = poisson_sample(cam.dark, &mut rng)?;
        let noise: f64 = rng.sample(StandardNormal);
        let analog = cam.gain * (signal + dark) as f64 + cam.sigma_read * noise;
        bits.push((analog >= cam.threshold) as u8);
    }
    Ok(RawFrame::new(flux.height(), flux.width(), bits).expect("binary by construction"))
}

/// Sum of `n_frames` independent exposures; frame `k` uses `stream_seed(master_seed, k)`.
pub fn accumulate_frames(
    img: &GroundTruthImage,
    cam: &CameraModel,
    n_frames: usize,
    master_seed: u64,
) -> Result<CountMap, SimError> {
    if n_frames == 0 {
        return Err(SimError::NoFrames);
    }
    let image = img.image();
    let mut counts = CountMap::new(image.height(), image.width(), vec![0; image.data().len()])
        .expect("same dimensions");
    for k in 0..n_frames {
        let frame = simulate_frame(img, cam, stream_seed(master_seed, k as u64))?;
        for (c, &b) in counts.counts_mut().iter_mut().zip(frame.bits()) {
            *c += b as u32;
        }
    }
    Ok(counts)
}

/// Probability that a pixel with signal rate `rate` registers a detection
/// when read noise is negligible and `0 < threshold <= gain`.
pub fn detection_probability(rate: f64, dark: f64) -> f64 {
    1.0 - (-(rate + dark)).exp()
}
