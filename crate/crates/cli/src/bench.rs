use std::path::{Path, PathBuf};
use std::time::Instant;

use clap::Args;
use log::info;
use photonlab::cae::{CaeWeights, TrainingHistory};
use photonlab::dataset::PairSet;
use photonlab::imageio;
use photonlab::metrics::{compare_methods, ContrastMode, EvalReport};
use photonlab::{CountMap, Image, RawFrame};
use serde::{Deserialize, Serialize};

use crate::config::{resolve_seed, CameraSpec, ExperimentConfig, CONFIG_FILE};
use crate::error::{compute, input, CliError};
use crate::files::{create_dir, save_image, stem, write_json, write_text};
use crate::learn::{infer_frames, train_to_dir};
use crate::prepare::{build_splits, read_sources, synth_sources, write_splits};
use crate::recon::solve_all;
use crate::report::write_report;

pub const SUMMARY_FILE: &str = "summary.json";
pub const TIMING_JSON: &str = "timing.json";
pub const PANEL_FILE: &str = "panel.pgm";
pub const CAE: &str = "cae";
pub const TV: &str = "tv";

/// Run the whole comparison (prepare, train, reconstruct both ways, evaluate)
#[derive(Args, Clone, Debug, Default)]
pub struct BenchArgs {
    /// Experiment configuration (JSON); flags override its values
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// IDX image file; procedural glyphs are used when absent
    #[arg(long)]
    pub images: Option<PathBuf>,
    #[arg(long)]
    pub labels: Option<PathBuf>,
    #[arg(long)]
    pub camera: Option<String>,
    #[arg(long)]
    pub depth: Option<usize>,
    #[arg(long)]
    pub epochs: Option<usize>,
    #[arg(long)]
    pub train_count: Option<usize>,
    #[arg(long)]
    pub test_count: Option<usize>,
    #[arg(long)]
    pub contrast: Option<ContrastMode>,
}

impl BenchArgs {
    /// Config file (or defaults) with every given flag applied and the seed fixed.
    pub fn resolve(&self) -> Result<ExperimentConfig, CliError> {
        let mut cfg = match &self.config {
            Some(p) => ExperimentConfig::load(p)?,
            None => ExperimentConfig::default(),
        };
        if let Some(v) = &self.out {
            cfg.output = v.clone();
        }
        if let Some(v) = &self.images {
            cfg.dataset.images = Some(v.clone());
        }
        if let Some(v) = &self.labels {
            cfg.dataset.labels = Some(v.clone());
        }
        if let Some(v) = &self.camera {
            cfg.camera = CameraSpec::Preset(v.clone());
        }
        if let Some(v) = self.depth {
            cfg.depth = v;
        }
        if let Some(v) = self.epochs {
            cfg.train.epochs = v;
        }
        if let Some(v) = self.train_count {
            cfg.split.train = v;
        }
        if let Some(v) = self.test_count {
            cfg.split.test = v;
        }
        if let Some(v) = self.contrast {
            cfg.contrast_mode = v;
        }
        cfg.seed = Some(resolve_seed(self.seed, cfg.seed)?);
        Ok(cfg)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MethodSummary {
    pub name: String,
    pub median_contrast: f64,
    pub mean_contrast: f64,
    pub median_mse: f64,
    pub mean_mse: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BenchSummary {
    pub dataset: String,
    pub camera_preset: String,
    pub depth: usize,
    pub epochs: usize,
    pub train_pairs: usize,
    pub test_pairs: usize,
    pub seed: u64,
    pub contrast_mode: ContrastMode,
    pub final_train_mse: f64,
    pub final_test_mse: Option<f64>,
    pub methods: Vec<MethodSummary>,
}

impl BenchSummary {
    pub fn method(&self, name: &str) -> Option<&MethodSummary> {
        self.methods.iter().find(|m| m.name == name)
    }
}

/// Wall-clock figures, kept apart from the reproducible outputs.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct BenchTiming {
    pub total_seconds: f64,
    pub train_seconds: f64,
    pub cae_ms_per_image: f64,
    pub tv_ms_per_image: f64,
}

pub struct BenchOutcome {
    pub config: ExperimentConfig,
    pub summary: BenchSummary,
    pub timing: BenchTiming,
    pub report: EvalReport,
    pub history: TrainingHistory,
    pub weights: CaeWeights<f32>,
    pub test: PairSet,
    pub cae: Vec<Image>,
    pub tv: Vec<Image>,
}

fn frame_counts(frame: &RawFrame) -> CountMap {
    CountMap::new(frame.height(), frame.width(), frame.bits().iter().map(|&b| b as u32).collect())
        .expect("frame dimensions")
}

/// Columns of (truth, frame, TV, CAE) for the first `n` test images.
pub fn panel(truths: &[Image], frames: &[RawFrame], tv: &[Image], cae: &[Image], n: usize) -> Image {
    const GAP: usize = 2;
    let n = n.min(truths.len()).max(1);
    let side = truths.first().map_or(28, |t| t.height());
    let rows: [Vec<Image>; 4] = [
        truths[..n].to_vec(),
        frames[..n].iter().map(|f| f.to_image()).collect(),
        tv[..n].to_vec(),
        cae[..n].to_vec(),
    ];
    let height = 4 * side + 3 * GAP;
    let width = n * side + (n - 1) * GAP;
    let mut out = Image::filled(height, width, 1.0);
    for (r, row) in rows.iter().enumerate() {
        for (c, img) in row.iter().enumerate() {
            for y in 0..side {
                for x in 0..side {
                    let v = img.get(y, x).clamp(0.0, 1.0);
                    out.data_mut()[(r * (side + GAP) + y) * width + c * (side + GAP) + x] = v;
                }
            }
        }
    }
    out
}

fn save_recons(dir: &Path, images: &[Image]) -> Result<(), CliError> {
    create_dir(dir)?;
    for (k, img) in images.iter().enumerate() {
        save_image(&dir.join(format!("{k:05}.pgm")), img)?;
        let p = dir.join(format!("{k:05}.f32"));
        imageio::write_f32i(&p, img).map_err(input(format!("writing {}", p.display())))?;
    }
    Ok(())
}

fn mean(v: &[f64]) -> f64 {
    v.iter().sum::<f64>() / v.len().max(1) as f64
}

/// Runs the full comparison described by `cfg` (whose seed must be set) into `cfg.output`.
pub fn run_bench(cfg: &ExperimentConfig) -> Result<BenchOutcome, CliError> {
    let started = Instant::now();
    let seed = cfg.seed.ok_or_else(|| CliError::Usage("bench config has no seed".into()))?;
    let out = &cfg.output;
    create_dir(out)?;
    write_text(&out.join(CONFIG_FILE), &cfg.to_json())?;

    let (dataset, sources) = match &cfg.dataset.images {
        Some(p) => (stem(p), read_sources(p, cfg.dataset.labels.as_deref())?),
        None => ("glyphs".to_string(), synth_sources(cfg.split.train + cfg.split.test, seed)),
    };
    let splits = build_splits(&sources, &dataset, &cfg.camera, cfg.split.train, cfg.split.test, seed)?;
    write_splits(&out.join("pairs"), &splits)?;
    info!(
        "{dataset}: {} train / {} test pairs, camera {}",
        splits.train.len(),
        splits.test.len(),
        splits.train.camera_preset
    );

    let t = Instant::now();
    let test_pairs = splits.test.training_pairs();
    let (weights, history) = train_to_dir(
        &splits.train.training_pairs(),
        &test_pairs,
        cfg.depth,
        &cfg.train,
        seed,
        out,
    )?;
    let train_seconds = t.elapsed().as_secs_f64();

    let frames = splits.test.frames();
    let cae_runs = infer_frames(&weights, &frames)?;
    let counts: Vec<CountMap> = frames.iter().map(frame_counts).collect();
    let tv_runs = solve_all(&counts, &cfg.tv)?;
    let cae: Vec<Image> = cae_runs.iter().map(|(img, _)| img.clone()).collect();
    let tv: Vec<Image> = tv_runs.iter().map(|r| r.image.clone()).collect();
    save_recons(&out.join("recon").join(CAE), &cae)?;
    save_recons(&out.join("recon").join(TV), &tv)?;
    for (k, r) in tv_runs.iter().enumerate() {
        write_text(&out.join("recon").join(TV).join(format!("{k:05}_trace.csv")), &r.trace.to_csv())?;
    }

    let truths: Vec<Image> = splits.test.truths().into_iter().map(|t| t.into_image()).collect();
    let report = compare_methods(
        &[(CAE.to_string(), cae.clone()), (TV.to_string(), tv.clone())],
        &truths,
        cfg.contrast_mode,
    )
    .map_err(compute("scoring reconstructions"))?;
    write_report(out, &report)?;
    let p = out.join(PANEL_FILE);
    imageio::write_pgm(&p, &panel(&truths, &frames, &tv, &cae, 8)).map_err(input(format!("writing {}", p.display())))?;

    let last = history.last().expect("at least one epoch");
    let summary = BenchSummary {
        dataset,
        camera_preset: splits.test.camera_preset.clone(),
        depth: cfg.depth,
        epochs: cfg.train.epochs,
        train_pairs: splits.train.len(),
        test_pairs: splits.test.len(),
        seed,
        contrast_mode: cfg.contrast_mode,
        final_train_mse: last.train_mse,
        final_test_mse: last.test_mse,
        methods: report
            .methods
            .iter()
            .map(|m| MethodSummary {
                name: m.name.clone(),
                median_contrast: m.aggregates.median_contrast,
                mean_contrast: m.aggregates.mean_contrast,
                median_mse: m.aggregates.median_mse,
                mean_mse: m.aggregates.mean_mse,
            })
            .collect(),
    };
    write_json(&out.join(SUMMARY_FILE), &summary)?;
    let timing = BenchTiming {
        total_seconds: started.elapsed().as_secs_f64(),
        train_seconds,
        cae_ms_per_image: 1e3 * mean(&cae_runs.iter().map(|(_, s)| *s).collect::<Vec<_>>()),
        tv_ms_per_image: 1e3 * mean(&tv_runs.iter().map(|r| r.seconds).collect::<Vec<_>>()),
    };
    write_json(&out.join(TIMING_JSON), &timing)?;
    for m in &summary.methods {
        info!(
            "{}: median contrast {:.4}, median mse {:.6}",
            m.name, m.median_contrast, m.median_mse
        );
    }
    Ok(BenchOutcome {
        config: cfg.clone(),
        summary,
        timing,
        report,
        history,
        weights,
        test: splits.test,
        cae,
        tv,
    })
}

pub fn cmd_bench(args: &BenchArgs) -> Result<BenchOutcome, CliError> {
    run_bench(&args.resolve()?)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn flags_override_file_values() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("exp.json");
        std::fs::write(&path, r#"{"depth": 9, "seed": 5, "split": {"train": 10, "test": 3}}"#).unwrap();
        let args = BenchArgs {
            config: Some(path),
            depth: Some(5),
            test_count: Some(4),
            ..BenchArgs::default()
        };
        let cfg = args.resolve().unwrap();
        assert_eq!((cfg.depth, cfg.split.train, cfg.split.test, cfg.seed), (5, 10, 4, Some(5)));
    }

    #[test]
    fn panel_layout() {
        let t = vec![Image::filled(28, 28, 1.0); 3];
        let f = vec![RawFrame::new(28, 28, vec![0; 784]).unwrap(); 3];
        let p = panel(&t, &f, &t, &t, 3);
        assert_eq!((p.height(), p.width()), (4 * 28 + 6, 3 * 28 + 4));
        assert_eq!(p.get(28 + 2, 0), 0.0);
    }
}
