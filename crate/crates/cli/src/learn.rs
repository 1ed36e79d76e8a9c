use std::path::{Path, PathBuf};
use std::time::Instant;

use clap::Args;
use log::info;
use photonlab::cae::{self, train_with_progress, CaeArchitecture, CaeWeights, TrainConfig, TrainingHistory};
use photonlab::dataset::load_pair_cache;
use photonlab::imageio;
use photonlab::{Image, RawFrame};
use rayon::prelude::*;
use serde::Serialize;

use crate::config::{resolve_seed, CONFIG_FILE};
use crate::error::{compute, input, CliError};
use crate::files::{create_dir, list_images, read_frame, save_image, stem, write_json, write_text};

pub const MODEL_FILE: &str = "model.caew";
pub const HISTORY_FILE: &str = "history.csv";
pub const TIMING_FILE: &str = "timing.csv";

/// Train a convolutional auto-encoder on a pair cache
#[derive(Args, Clone, Debug, Serialize)]
pub struct TrainArgs {
    /// Training pair cache (a dataset-prepare train/ directory)
    #[arg(long)]
    pub pairs: PathBuf,
    /// Held-out pair cache scored during training
    #[arg(long)]
    pub eval: Option<PathBuf>,
    /// Weighted layer count: 5, 7 or 9
    #[arg(long, default_value_t = 7)]
    pub depth: usize,
    #[arg(long)]
    pub epochs: Option<usize>,
    #[arg(long)]
    pub batch_size: Option<usize>,
    #[arg(long)]
    pub learning_rate: Option<f64>,
    #[arg(long)]
    pub weight_decay: Option<f64>,
    #[arg(long)]
    pub eval_every: Option<usize>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Output directory (receives model.caew, history.csv, timing.csv)
    #[arg(long)]
    pub out: PathBuf,
}

impl TrainArgs {
    pub fn train_config(&self) -> TrainConfig {
        let d = TrainConfig::default();
        TrainConfig {
            epochs: self.epochs.unwrap_or(d.epochs),
            batch_size: self.batch_size.unwrap_or(d.batch_size),
            learning_rate: self.learning_rate.unwrap_or(d.learning_rate),
            weight_decay: self.weight_decay.unwrap_or(d.weight_decay),
            eval_every: self.eval_every.unwrap_or(d.eval_every),
        }
    }
}

#[derive(Serialize)]
struct ResolvedTrain<'a> {
    pairs: &'a Path,
    eval: Option<&'a Path>,
    depth: usize,
    train: TrainConfig,
    seed: u64,
    out: &'a Path,
}

/// Trains, then writes the weight file and both CSVs into `out`.
pub fn train_to_dir(
    train: &[cae::TrainingPair],
    eval: &[cae::TrainingPair],
    depth: usize,
    cfg: &TrainConfig,
    seed: u64,
    out: &Path,
) -> Result<(CaeWeights<f32>, TrainingHistory), CliError> {
    let arch = CaeArchitecture::for_depth(depth).map_err(|e| CliError::Usage(e.to_string()))?;
    cfg.validate().map_err(|e| CliError::Usage(e.to_string()))?;
    create_dir(out)?;
    let (weights, history) = train_with_progress(train, eval, &arch, cfg, seed, |r| {
        let test = r.test_mse.map(|v| format!(", test mse {v:.6}")).unwrap_or_default();
        info!("epoch {}/{}: train mse {:.6}{} ({:.1}s)", r.epoch, cfg.epochs, r.train_mse, test, r.seconds);
    })
    .map_err(compute(format!("training depth-{depth} network")))?;
    let model = out.join(MODEL_FILE);
    cae::save_weights(&weights, &model).map_err(input(format!("writing {}", model.display())))?;
    write_text(&out.join(HISTORY_FILE), &history.to_csv())?;
    write_text(&out.join(TIMING_FILE), &history.timing_csv())?;
    Ok((weights, history))
}

pub fn cmd_train(args: &TrainArgs) -> Result<TrainingHistory, CliError> {
    let seed = resolve_seed(args.seed, None)?;
    let cfg = args.train_config();
    let load = |dir: &Path| load_pair_cache(dir).map_err(input(format!("loading pairs from {}", dir.display())));
    let train = load(&args.pairs)?.training_pairs();
    let eval = match &args.eval {
        Some(dir) => load(dir)?.training_pairs(),
        None => Vec::new(),
    };
    create_dir(&args.out)?;
    write_json(
        &args.out.join(CONFIG_FILE),
        &ResolvedTrain {
            pairs: &args.pairs,
            eval: args.eval.as_deref(),
            depth: args.depth,
            train: cfg.clone(),
            seed,
            out: &args.out,
        },
    )?;
    let (_, history) = train_to_dir(&train, &eval, args.depth, &cfg, seed, &args.out)?;
    Ok(history)
}

/// Reconstruct frames with a trained network
#[derive(Args, Clone, Debug, Serialize)]
pub struct InferArgs {
    #[arg(long)]
    pub model: PathBuf,
    /// Binary frame file or directory of frames
    #[arg(long)]
    pub input: PathBuf,
    /// Also write lossless 32-bit float copies (.f32)
    #[arg(long)]
    pub raw: bool,
    #[arg(long)]
    pub out: PathBuf,
}

/// Reconstructions in input order, with per-image wall time in seconds.
pub fn infer_frames(weights: &CaeWeights<f32>, frames: &[RawFrame]) -> Result<Vec<(Image, f64)>, CliError> {
    frames
        .par_iter()
        .enumerate()
        .map(|(i, f)| {
            let t = Instant::now();
            let img = weights
                .reconstruct(f)
                .map_err(input(format!("frame {i} does not fit the network")))?;
            Ok((img, t.elapsed().as_secs_f64()))
        })
        .collect()
}

pub fn cmd_infer(args: &InferArgs) -> Result<Vec<Image>, CliError> {
    let weights = cae::load_weights(&args.model).map_err(input(format!("loading {}", args.model.display())))?;
    let files = list_images(&args.input)?;
    let frames = files.iter().map(|p| read_frame(p)).collect::<Result<Vec<_>, _>>()?;
    let recons = infer_frames(&weights, &frames)?;
    create_dir(&args.out)?;
    for (path, (img, secs)) in files.iter().zip(&recons) {
        let name = stem(path);
        save_image(&args.out.join(format!("{name}.pgm")), img)?;
        if args.raw {
            let p = args.out.join(format!("{name}.f32"));
            imageio::write_f32i(&p, img).map_err(input(format!("writing {}", p.display())))?;
        }
        info!("{name}: {:.2} ms", secs * 1e3);
    }
    write_json(&args.out.join(CONFIG_FILE), args)?;
    Ok(recons.into_iter().map(|(img, _)| img).collect())
}
