//! End-to-end acceptance run. Prints one PASS/FAIL line per criterion and
//! exits nonzero if any criterion fails. Artifacts (panels, histories,
//! reports) are kept under the target tmpdir for inspection.

use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Instant;

use photonlab::cae::TrainConfig;
use photonlab::gradcheck::{check_tiny_cae, run_trials, KERNEL_CHECKS};
use photonlab::photon_sim::{binomial_thin, poisson_sample, PAPER_LIKE, PAPER_LIKE_DIM};
use photonlab::rng::stream_rng;
use photonlab::tv::{reconstruct_tv, TvConfig};
use photonlab::{CountMap, RawFrame};
use photonlab_cli::bench::{cmd_bench, run_bench, BenchArgs, BenchOutcome, CAE, PANEL_FILE, TV};
use photonlab_cli::config::{CameraSpec, ExperimentConfig, SplitCounts};
use photonlab_cli::learn::{train_to_dir, HISTORY_FILE};
use photonlab_cli::prepare::{build_splits, synth_sources};
use statrs::distribution::{ChiSquared, ContinuousCDF, Discrete, Poisson};

struct Verdict {
    pass: bool,
    detail: String,
}

fn verdict(pass: bool, detail: String) -> Verdict {
    Verdict { pass, detail }
}

fn root() -> PathBuf {
    Path::new(env!("CARGO_TARGET_TMPDIR")).join("acceptance")
}

fn gradients() -> Verdict {
    let t = Instant::now();
    let mut kernel_worst = 0.0f64;
    let mut worst_name = "";
    for (name, check) in KERNEL_CHECKS {
        let r = run_trials(check, 2024, 100);
        if r.max_rel_error >= kernel_worst {
            kernel_worst = r.max_rel_error;
            worst_name = name;
        }
    }
    let model_worst = (0..5).map(|s| check_tiny_cae(s).max_rel_error).fold(0.0, f64::max);
    let secs = t.elapsed().as_secs_f64();
    verdict(
        kernel_worst < 1e-4 && model_worst < 1e-3 && secs < 120.0,
        format!("kernels max rel {kernel_worst:.2e} ({worst_name}), tiny CAE max rel {model_worst:.2e}, {secs:.1}s"),
    )
}

fn poisson_statistics() -> Verdict {
    let n = 1_000_000;
    let mut rng = stream_rng(16);
    let draws: Vec<f64> = (0..n).map(|_| poisson_sample(1.6, &mut rng).unwrap() as f64).collect();
    let mean = draws.iter().sum::<f64>() / n as f64;
    let var = draws.iter().map(|d| (d - mean).powi(2)).sum::<f64>() / (n - 1) as f64;

    let mut hist = [0u64; 6];
    for _ in 0..n {
        let k = binomial_thin(poisson_sample(4.0, &mut rng).unwrap(), 0.1, &mut rng);
        hist[(k as usize).min(5)] += 1;
    }
    let target = Poisson::new(0.4).unwrap();
    let mut expected: Vec<f64> = (0..5).map(|k| target.pmf(k) * n as f64).collect();
    expected.push(n as f64 - expected.iter().sum::<f64>());
    let stat: f64 = hist.iter().zip(&expected).map(|(&o, e)| (o as f64 - e).powi(2) / e).sum();
    let p = 1.0 - ChiSquared::new(5.0).unwrap().cdf(stat);

    let var_rel = (var - 1.6).abs() / 1.6;
    verdict(
        (mean - 1.6).abs() < 0.005 && var_rel < 0.015 && p > 0.01,
        format!("mean {mean:.4}, variance {var:.4} ({:.2}% off), thinning chi-square p = {p:.3}", 100.0 * var_rel),
    )
}

fn tv_solver() -> Verdict {
    let sources = synth_sources(60, 303);
    let splits = build_splits(&sources, "glyphs", &CameraSpec::Preset(PAPER_LIKE.into()), 50, 10, 303).unwrap();
    let mut monotone = 0;
    let mut slowest = 0.0f64;
    for pair in &splits.train.pairs {
        let y = CountMap::new(28, 28, pair.frame.bits().iter().map(|&b| b as u32).collect()).unwrap();
        let t = Instant::now();
        let (_, trace) = reconstruct_tv(&y, &TvConfig::default()).unwrap();
        slowest = slowest.max(t.elapsed().as_secs_f64());
        if trace.objectives().windows(2).all(|w| w[1] <= w[0]) {
            monotone += 1;
        }
    }
    let cfg = TvConfig {
        tv_weight: 1e-4,
        gain: 50.0,
        ..TvConfig::default()
    };
    let mut worst = 0.0f64;
    for pair in &splits.test.pairs {
        let truth = pair.truth.image();
        let y = CountMap::new(28, 28, truth.data().iter().map(|v| (50.0 * v).round() as u32).collect()).unwrap();
        let t = Instant::now();
        let (x, _) = reconstruct_tv(&y, &cfg).unwrap();
        slowest = slowest.max(t.elapsed().as_secs_f64());
        let range = truth.max() - truth.min();
        let err = x.data().iter().zip(truth.data()).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
        worst = worst.max(err / range);
    }
    verdict(
        monotone == 50 && worst < 0.05 && slowest < 1.0,
        format!(
            "{monotone}/50 monotone, near-noiseless worst pixel error {:.2}% of range, slowest solve {:.0} ms",
            100.0 * worst,
            slowest * 1e3
        ),
    )
}

fn paper_protocol(camera: &str, dir: &str) -> BenchOutcome {
    let cfg = ExperimentConfig {
        camera: CameraSpec::Preset(camera.into()),
        split: SplitCounts { train: 2000, test: 200 },
        depth: 7,
        train: TrainConfig {
            epochs: 100,
            eval_every: 10,
            ..TrainConfig::default()
        },
        output: root().join(dir),
        seed: Some(2021),
        ..ExperimentConfig::default()
    };
    run_bench(&cfg).expect("bench run")
}

fn reproduction(run: &BenchOutcome) -> Verdict {
    let cae = run.summary.method(CAE).unwrap();
    let tv = run.summary.method(TV).unwrap();
    let secs = run.timing.total_seconds;
    verdict(
        cae.median_contrast >= 0.9 && tv.median_contrast <= 0.6 && cae.median_mse < tv.median_mse && secs < 7200.0,
        format!(
            "median contrast CAE {:.3} / TV {:.3}, median MSE CAE {:.5} / TV {:.5}, {:.0} min",
            cae.median_contrast,
            tv.median_contrast,
            cae.median_mse,
            tv.median_mse,
            secs / 60.0
        ),
    )
}

fn robustness(run: &BenchOutcome) -> Verdict {
    let cae = run.summary.method(CAE).unwrap();
    let panel = run.config.output.join(PANEL_FILE);
    verdict(
        cae.median_contrast >= 0.8 && panel.exists(),
        format!(
            "median CAE contrast {:.3}, median MSE {:.5}; panel for inspection: {}",
            cae.median_contrast,
            cae.median_mse,
            panel.display()
        ),
    )
}

fn depth_study() -> Verdict {
    let sources = synth_sources(1000, 5);
    let splits = build_splits(&sources, "glyphs", &CameraSpec::Preset(PAPER_LIKE.into()), 1000, 0, 5).unwrap();
    let pairs = splits.train.training_pairs();
    let cfg = TrainConfig {
        epochs: 200,
        ..TrainConfig::default()
    };
    let mut ok = true;
    let mut parts = Vec::new();
    for depth in [5, 7, 9] {
        let dir = root().join(format!("depth{depth}"));
        let (_, history) = train_to_dir(&pairs, &[], depth, &cfg, 5, &dir).expect("training");
        let c = history.train_curve();
        let drop = 1.0 - c[199] / c[0];
        ok &= dir.join(HISTORY_FILE).exists() && drop >= 0.5;
        let mut part = format!("depth {depth}: {:.4} -> {:.5} ({:.0}% lower)", c[0], c[199], 100.0 * drop);
        if depth == 5 {
            let tail = (c[199] - c[179]).abs() / c[179];
            ok &= tail < 0.01;
            part.push_str(&format!(", last-20 change {:.2}%", 100.0 * tail));
        }
        parts.push(part);
    }
    verdict(ok, parts.join("; "))
}

fn real_time(run: &BenchOutcome) -> Verdict {
    let frames: Vec<&RawFrame> = run.test.pairs.iter().map(|p| &p.frame).collect();
    let t = Instant::now();
    for f in &frames {
        run.weights.reconstruct(f).unwrap();
    }
    let cae_ms = t.elapsed().as_secs_f64() * 1e3 / frames.len() as f64;
    let t = Instant::now();
    for f in &frames {
        let y = CountMap::new(28, 28, f.bits().iter().map(|&b| b as u32).collect()).unwrap();
        reconstruct_tv(&y, &TvConfig::default()).unwrap();
    }
    let tv_ms = t.elapsed().as_secs_f64() * 1e3 / frames.len() as f64;
    let speedup = tv_ms / cae_ms;
    verdict(
        cae_ms < 50.0 && speedup >= 100.0,
        format!("CAE {cae_ms:.2} ms/image, TV {tv_ms:.2} ms/solve, speedup {speedup:.1}x"),
    )
}

fn tree_bytes(dir: &Path) -> Vec<(PathBuf, Vec<u8>)> {
    let mut out = Vec::new();
    let mut stack = vec![dir.to_path_buf()];
    while let Some(d) = stack.pop() {
        for e in fs::read_dir(&d).unwrap() {
            let p = e.unwrap().path();
            if p.is_dir() {
                stack.push(p);
            } else {
                out.push((p.strip_prefix(dir).unwrap().to_path_buf(), fs::read(&p).unwrap()));
            }
        }
    }
    out.sort();
    out
}

fn determinism() -> Verdict {
    let run = |name: &str| {
        let out = root().join(name);
        cmd_bench(&BenchArgs {
            out: Some(out.clone()),
            seed: Some(8),
            depth: Some(5),
            epochs: Some(3),
            train_count: Some(96),
            test_count: Some(24),
            ..BenchArgs::default()
        })
        .expect("bench run");
        out
    };
    let (a, b) = (run("determinism-a"), run("determinism-b"));
    let mut differing = Vec::new();
    for f in ["model.caew", "report.json", "report.csv", "summary.json", "history.csv"] {
        if fs::read(a.join(f)).unwrap() != fs::read(b.join(f)).unwrap() {
            differing.push(f.to_string());
        }
    }
    let recon = tree_bytes(&a.join("recon"));
    if recon != tree_bytes(&b.join("recon")) {
        differing.push("recon/".into());
    }
    verdict(
        differing.is_empty(),
        if differing.is_empty() {
            format!("weights, {} reconstruction files and reports byte-identical", recon.len())
        } else {
            format!("differs: {}", differing.join(", "))
        },
    )
}

fn main() -> ExitCode {
    let _ = fs::remove_dir_all(root());
    let report = |n: usize, name: &str, v: &Verdict| {
        println!("criterion {n} {} {name}: {}", if v.pass { "PASS" } else { "FAIL" }, v.detail);
        v.pass
    };
    let mut all = true;
    all &= report(1, "gradient suite", &gradients());
    all &= report(2, "Poisson statistics", &poisson_statistics());
    all &= report(3, "TV solver", &tv_solver());
    let bright = paper_protocol(PAPER_LIKE, "paper-like");
    all &= report(4, "reproduction at 1.6 photons/pixel", &reproduction(&bright));
    let dim = paper_protocol(PAPER_LIKE_DIM, "paper-like-dim");
    all &= report(5, "robustness at 0.8 photons/pixel", &robustness(&dim));
    all &= report(6, "depth study", &depth_study());
    all &= report(7, "real-time inference", &real_time(&bright));
    all &= report(8, "determinism", &determinism());
    if all {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
