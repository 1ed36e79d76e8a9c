//! Procedural handwritten-digit stand-ins.
//!
//! Each glyph is a stroke skeleton for one of the ten digits, jittered,
//! randomly affinely distorted and rendered as an anti-aliased pen stroke
//! into a 20x20 box centred on a 28x28 canvas. Output is 8-bit, like MNIST.

use std::f64::consts::PI;

use rand::Rng;
use rayon::prelude::*;

use crate::dataset::IdxArray;
use crate::image::IMAGE_SIDE;
use crate::rng::{stream_rng, stream_seed};

type Stroke = Vec<(f64, f64)>;

fn arc(cx: f64, cy: f64, rx: f64, ry: f64, from_deg: f64, to_deg: f64) -> Stroke {
    let steps = ((to_deg - from_deg).abs() / 10.0).ceil().max(2.0) as usize;
    (0..=steps)
        .map(|i| {
            let t = (from_deg + (to_deg - from_deg) * i as f64 / steps as f64) * PI / 180.0;
            (cx + rx * t.cos(), cy + ry * t.sin())
        })
        .collect()
}

/// Skeletons in the unit square, x to the right and y downward.
fn skeleton(digit: u8) -> Vec<Stroke> {
    match digit % 10 {
        0 => vec![arc(0.5, 0.5, 0.3, 0.42, 0.0, 360.0)],
        1 => vec![vec![(0.33, 0.24), (0.52, 0.08), (0.52, 0.92)]],
        2 => {
            let mut s = arc(0.5, 0.32, 0.27, 0.24, -180.0, 35.0);
            s.extend([(0.2, 0.92), (0.84, 0.92)]);
            vec![s]
        }
        3 => vec![arc(0.48, 0.29, 0.24, 0.21, -160.0, 90.0), arc(0.48, 0.71, 0.27, 0.21, -90.0, 155.0)],
        4 => vec![vec![(0.64, 0.08), (0.14, 0.64), (0.86, 0.64)], vec![(0.64, 0.08), (0.64, 0.92)]],
        5 => {
            let mut s = vec![(0.8, 0.08), (0.32, 0.08), (0.28, 0.45)];
            s.extend(arc(0.5, 0.67, 0.28, 0.25, -130.0, 150.0));
            vec![s]
        }
        6 => vec![
            vec![(0.72, 0.08), (0.42, 0.32), (0.25, 0.64)],
            arc(0.5, 0.68, 0.25, 0.24, 0.0, 360.0),
        ],
        7 => vec![vec![(0.14, 0.1), (0.86, 0.1), (0.42, 0.92)]],
        8 => vec![arc(0.5, 0.28, 0.21, 0.2, 0.0, 360.0), arc(0.5, 0.7, 0.25, 0.22, 0.0, 360.0)],
        _ => vec![arc(0.48, 0.31, 0.24, 0.23, 0.0, 360.0), vec![(0.72, 0.31), (0.62, 0.92)]],
    }
}

fn segment_distance(p: (f64, f64), a: (f64, f64), b: (f64, f64)) -> f64 {
    let (dx, dy) = (b.0 - a.0, b.1 - a.1);
    let len2 = dx * dx + dy * dy;
    let t = if len2 > 0.0 {
        (((p.0 - a.0) * dx + (p.1 - a.1) * dy) / len2).clamp(0.0, 1.0)
    } else {
        0.0
    };
    ((p.0 - a.0 - t * dx).powi(2) + (p.1 - a.1 - t * dy).powi(2)).sqrt()
}

/// Renders one randomly distorted instance of `digit` as row-major 8-bit pixels.
pub fn render_digit<R: Rng + ?Sized>(digit: u8, rng: &mut R) -> Vec<u8> {
    let side = IMAGE_SIDE as f64;
    let scale = 20.0 * rng.random_range(0.8..1.0);
    let angle = rng.random_range(-0.2..0.2f64);
    let shear = rng.random_range(-0.25..0.25);
    let (tx, ty) = (rng.random_range(-1.5..1.5), rng.random_range(-1.5..1.5));
    let pen = rng.random_range(1.0..1.8);
    let (sin, cos) = angle.sin_cos();

    let strokes: Vec<Stroke> = skeleton(digit)
        .into_iter()
        .map(|s| {
            let wobble = (rng.random_range(-0.04..0.04), rng.random_range(-0.04..0.04));
            s.into_iter()
                .map(|(x, y)| {
                    let (u, v) = (x - 0.5 + wobble.0 + shear * (y - 0.5), y - 0.5 + wobble.1);
                    (
                        side / 2.0 + tx + scale * (cos * u - sin * v),
                        side / 2.0 + ty + scale * (sin * u + cos * v),
                    )
                })
                .collect()
        })
        .collect();

    let mut out = Vec::with_capacity(IMAGE_SIDE * IMAGE_SIDE);
    for r in 0..IMAGE_SIDE {
        for c in 0..IMAGE_SIDE {
            let p = (c as f64 + 0.5, r as f64 + 0.5);
            let d = strokes
                .iter()
                .flat_map(|s| s.windows(2).map(move |w| segment_distance(p, w[0], w[1])))
                .fold(f64::INFINITY, f64::min);
            let v = (pen + 0.5 - d).clamp(0.0, 1.0);
            out.push((v * 255.0).round() as u8);
        }
    }
    out
}

/// `count` glyphs with labels; glyph `i` draws from stream `i` of `seed`.
pub fn synth_digits(count: usize, seed: u64) -> (IdxArray, IdxArray) {
    let rendered: Vec<(u8, Vec<u8>)> = (0..count)
        .into_par_iter()
        .map(|i| {
            let mut rng = stream_rng(stream_seed(seed, i as u64));
            let label = rng.random_range(0..10u8);
            (label, render_digit(label, &mut rng))
        })
        .collect();
    let labels: Vec<u8> = rendered.iter().map(|(l, _)| *l).collect();
    let pixels: Vec<u8> = rendered.into_iter().flat_map(|(_, p)| p).collect();
    (
        IdxArray::from_u8(vec![count, IMAGE_SIDE, IMAGE_SIDE], pixels).expect("payload size"),
        IdxArray::from_u8(vec![count], labels).expect("payload size"),
    )
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn glyphs_look_like_mnist() {
        let (images, labels) = synth_digits(200, 1);
        assert_eq!(images.shape(), &[200, 28, 28]);
        assert_eq!(labels.len(), 200);
        let imgs = images.images().unwrap();
        let mean: f64 = imgs.iter().map(|g| g.image().mean()).sum::<f64>() / 200.0;
        assert!((0.08..0.25).contains(&mean), "mean intensity {mean}");
        for g in &imgs {
            assert_eq!(g.image().max(), 1.0);
            let border: f64 = (0..28).map(|i| g.image().get(0, i) + g.image().get(i, 0)).sum();
            assert_eq!(border, 0.0);
        }
    }

    #[test]
    fn deterministic_per_seed() {
        assert_eq!(synth_digits(5, 9), synth_digits(5, 9));
        assert_ne!(synth_digits(5, 9).0, synth_digits(5, 10).0);
    }
}
