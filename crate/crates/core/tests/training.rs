use photonlab::cae::{
    decode_weights, encode_weights, evaluate_mse, init_weights, load_weights, save_weights, train, CaeArchitecture,
    TrainConfig, TrainingPair,
};
use photonlab::dataset::build_pairs;
use photonlab::glyphs::synth_digits;
use photonlab::photon_sim::CameraModel;
use rayon::prelude::*;

fn glyph_pairs(count: usize, seed: u64) -> Vec<TrainingPair> {
    let (images, _) = synth_digits(count, seed);
    let sources: Vec<_> = images.images().unwrap().into_iter().enumerate().collect();
    build_pairs(&sources, &CameraModel::paper_like(1.6), seed, 0)
        .unwrap()
        .into_iter()
        .map(|p| (p.frame, p.truth))
        .collect()
}

#[test]
fn overfits_a_single_pair() {
    let arch = CaeArchitecture::for_depth(5).unwrap();
    let pairs = glyph_pairs(1, 3);
    let cfg = TrainConfig {
        epochs: 500,
        batch_size: 1,
        learning_rate: 1e-3,
        ..TrainConfig::default()
    };
    let (weights, history) = train(&pairs, &[], &arch, &cfg, 11).unwrap();
    let last = history.last().unwrap().train_mse;
    assert!(last < 1e-3, "final train mse {last}");
    assert!(evaluate_mse(&weights, &pairs).unwrap() < 1e-3);
}

#[test]
fn subset_loss_halves() {
    let arch = CaeArchitecture::for_depth(5).unwrap();
    let pairs = glyph_pairs(100, 4);
    let held_out = glyph_pairs(16, 5);
    let cfg = TrainConfig {
        epochs: 200,
        batch_size: 10,
        eval_every: 50,
        ..TrainConfig::default()
    };
    let (_, history) = train(&pairs, &held_out, &arch, &cfg, 1).unwrap();
    let curve = history.train_curve();
    assert!(curve[199] <= 0.5 * curve[0], "{} -> {}", curve[0], curve[199]);
    let evals: Vec<usize> = history.epochs.iter().filter(|r| r.test_mse.is_some()).map(|r| r.epoch).collect();
    assert_eq!(evals, vec![50, 100, 150, 200]);
}

#[test]
fn trained_weights_round_trip_through_a_file() {
    let arch = CaeArchitecture::for_depth(7).unwrap();
    let pairs = glyph_pairs(8, 6);
    let cfg = TrainConfig {
        epochs: 2,
        batch_size: 4,
        ..TrainConfig::default()
    };
    let (weights, _) = train(&pairs, &[], &arch, &cfg, 2).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("model.caew");
    save_weights(&weights, &path).unwrap();
    let back = load_weights(&path).unwrap();
    assert_eq!(back, weights);
    assert_eq!(encode_weights(&back), std::fs::read(&path).unwrap());
    assert_eq!(decode_weights(&encode_weights(&back)).unwrap(), weights);
    let (frame, _) = &pairs[0];
    assert_eq!(back.reconstruct(frame).unwrap(), weights.reconstruct(frame).unwrap());
}

#[test]
fn concurrent_inference_matches_sequential() {
    let arch = CaeArchitecture::for_depth(7).unwrap();
    let weights = init_weights::<f32>(&arch, 9);
    let pairs = glyph_pairs(12, 7);
    let sequential: Vec<_> = pairs.iter().map(|(f, _)| weights.reconstruct(f).unwrap()).collect();
    let parallel: Vec<_> = pairs.par_iter().map(|(f, _)| weights.reconstruct(f).unwrap()).collect();
    assert_eq!(sequential, parallel);
    for img in &sequential {
        assert_eq!((img.height(), img.width()), (28, 28));
        assert!(img.data().iter().all(|&v| v > 0.0 && v < 1.0));
    }
}
