use std::time::Instant;

use photonlab::dataset::build_pairs;
use photonlab::glyphs::synth_digits;
use photonlab::photon_sim::CameraModel;
use photonlab::tv::{reconstruct_tv, tv_seminorm, StopReason, TvConfig};
use photonlab::CountMap;

fn frames(count: usize, seed: u64) -> Vec<CountMap> {
    let (images, _) = synth_digits(count, seed);
    let sources: Vec<_> = images.images().unwrap().into_iter().enumerate().collect();
    build_pairs(&sources, &CameraModel::paper_like(1.6), seed, 0)
        .unwrap()
        .iter()
        .map(|p| CountMap::from(&p.frame))
        .collect()
}

#[test]
fn accepted_objectives_are_monotone_on_50_frames() {
    let cfg = TvConfig::default();
    for y in frames(50, 3) {
        let (x, trace) = reconstruct_tv(&y, &cfg).unwrap();
        let obj = trace.objectives();
        assert!(obj.windows(2).all(|w| w[1] <= w[0]), "{obj:?}");
        assert!(x.data().iter().all(|&v| v >= 0.0));
        assert_ne!(trace.stop, StopReason::Stalled);
    }
}

#[test]
fn single_solve_is_fast() {
    let ys = frames(10, 4);
    let start = Instant::now();
    for y in &ys {
        reconstruct_tv(y, &TvConfig::default()).unwrap();
    }
    let per_solve = start.elapsed().as_secs_f64() / ys.len() as f64;
    assert!(per_solve < 1.0, "{per_solve} s per solve");
}

#[test]
fn heavier_regularisation_flattens_the_output() {
    let y = &frames(1, 5)[0];
    let tvs: Vec<f64> = [0.0, 0.1, 0.5, 2.0, 10.0, 100.0]
        .iter()
        .map(|&w| {
            let cfg = TvConfig {
                tv_weight: w,
                max_outer_iters: 300,
                ..TvConfig::default()
            };
            tv_seminorm(&reconstruct_tv(y, &cfg).unwrap().0)
        })
        .collect();
    assert!(tvs.windows(2).all(|w| w[1] <= w[0] + 1e-6), "{tvs:?}");
    assert!(tvs.last().unwrap() < &(0.01 * tvs[0]), "{tvs:?}");
}

#[test]
fn identical_inputs_identical_outputs() {
    let y = &frames(1, 6)[0];
    assert_eq!(
        reconstruct_tv(y, &TvConfig::default()).unwrap(),
        reconstruct_tv(y, &TvConfig::default()).unwrap()
    );
}
