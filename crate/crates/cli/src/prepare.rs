use std::path::{Path, PathBuf};

use clap::Args;
use log::info;
use photonlab::dataset::{self, build_pairs, make_split, IdxArray, PairManifest, PairSet};
use photonlab::glyphs::synth_digits;
use photonlab::imageio;
use photonlab::photon_sim::{accumulate_frames, simulate_frame, CameraModel};
use photonlab::rng::stream_seed;
use photonlab::GroundTruthImage;
use rayon::prelude::*;
use serde::Serialize;

use crate::config::{resolve_seed, CameraSpec, CONFIG_FILE};
use crate::error::{compute, input, CliError};
use crate::files::{create_dir, list_images, read_image, stem, write_json};

pub const IMAGES_FILE: &str = "images.idx3";
pub const LABELS_FILE: &str = "labels.idx1";

/// Write procedural digit glyphs as IDX files
#[derive(Args, Clone, Debug, Serialize)]
pub struct SynthArgs {
    /// Number of glyphs
    #[arg(long, default_value_t = 2200)]
    pub count: usize,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Output directory (receives images.idx3 and labels.idx1)
    #[arg(long)]
    pub out: PathBuf,
}

pub fn cmd_synth(args: &SynthArgs) -> Result<(), CliError> {
    let seed = resolve_seed(args.seed, None)?;
    create_dir(&args.out)?;
    let (images, labels) = synth_digits(args.count, seed);
    for (name, array) in [(IMAGES_FILE, &images), (LABELS_FILE, &labels)] {
        let path = args.out.join(name);
        dataset::write_idx(&path, array).map_err(input(format!("writing {}", path.display())))?;
    }
    write_json(&args.out.join(CONFIG_FILE), &SynthArgs { seed: Some(seed), ..args.clone() })?;
    info!("wrote {} glyphs to {}", args.count, args.out.display());
    Ok(())
}

/// Split an IDX image file and simulate one camera frame per image
#[derive(Args, Clone, Debug, Serialize)]
pub struct PrepareArgs {
    /// IDX image file (n x 28 x 28, unsigned bytes)
    #[arg(long)]
    pub images: PathBuf,
    /// Optional IDX label file; only checked for a matching count
    #[arg(long)]
    pub labels: Option<PathBuf>,
    #[arg(long, default_value_t = 2000)]
    pub train: usize,
    #[arg(long, default_value_t = 200)]
    pub test: usize,
    /// Camera preset: paper-like (1.6 photons/pixel) or paper-like-dim (0.8)
    #[arg(long, default_value = "paper-like")]
    pub camera: String,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Output directory (receives train/ and test/ pair caches)
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Clone, Debug)]
pub struct PreparedSplits {
    pub train: PairSet,
    pub test: PairSet,
}

pub fn read_sources(images: &Path, labels: Option<&Path>) -> Result<Vec<GroundTruthImage>, CliError> {
    let array = dataset::read_idx(images).map_err(input(format!("reading {}", images.display())))?;
    let imgs = array.images().map_err(input(format!("reading {}", images.display())))?;
    if let Some(lp) = labels {
        let l = dataset::read_idx(lp)
            .and_then(|a| a.labels())
            .map_err(input(format!("reading {}", lp.display())))?;
        if l.len() != imgs.len() {
            return Err(CliError::Usage(format!(
                "{} has {} labels but {} has {} images",
                lp.display(),
                l.len(),
                images.display(),
                imgs.len()
            )));
        }
    }
    Ok(imgs)
}

/// Seeded split of `sources`, then one frame per image. Test frames use the
/// streams after the training ones, so no two frames share a stream.
pub fn build_splits(
    sources: &[GroundTruthImage],
    dataset_name: &str,
    camera: &CameraSpec,
    train: usize,
    test: usize,
    seed: u64,
) -> Result<PreparedSplits, CliError> {
    let (preset, cam) = camera.resolve().map_err(|e| CliError::Usage(e.to_string()))?;
    let (train_idx, test_idx) =
        make_split(sources.len(), train, test, seed).map_err(|e| CliError::Usage(e.to_string()))?;
    let make = |idx: &[usize], split: &str, first_stream: u64| -> Result<PairSet, CliError> {
        let picked: Vec<(usize, GroundTruthImage)> = idx.iter().map(|&i| (i, sources[i].clone())).collect();
        let pairs = build_pairs(&picked, &cam, seed, first_stream).map_err(compute("simulating frames"))?;
        Ok(PairSet {
            dataset: dataset_name.to_string(),
            split: split.to_string(),
            camera_preset: preset.clone(),
            camera: cam.clone(),
            master_seed: seed,
            pairs,
        })
    };
    Ok(PreparedSplits {
        train: make(&train_idx, "train", 0)?,
        test: make(&test_idx, "test", train as u64)?,
    })
}

pub fn write_splits(out: &Path, splits: &PreparedSplits) -> Result<(PairManifest, PairManifest), CliError> {
    let write = |set: &PairSet| {
        let dir = out.join(&set.split);
        dataset::write_pair_cache(&dir, set).map_err(input(format!("writing {}", dir.display())))
    };
    Ok((write(&splits.train)?, write(&splits.test)?))
}

pub fn cmd_dataset_prepare(args: &PrepareArgs) -> Result<PreparedSplits, CliError> {
    let seed = resolve_seed(args.seed, None)?;
    let sources = read_sources(&args.images, args.labels.as_deref())?;
    let name = stem(&args.images);
    let splits = build_splits(
        &sources,
        &name,
        &CameraSpec::Preset(args.camera.clone()),
        args.train,
        args.test,
        seed,
    )?;
    create_dir(&args.out)?;
    write_splits(&args.out, &splits)?;
    write_json(&args.out.join(CONFIG_FILE), &PrepareArgs { seed: Some(seed), ..args.clone() })?;
    info!(
        "{}: {} train / {} test pairs in {}",
        name,
        splits.train.len(),
        splits.test.len(),
        args.out.display()
    );
    Ok(splits)
}

/// Simulate camera frames (or accumulated count maps) of ground-truth images
#[derive(Args, Clone, Debug, Serialize)]
pub struct SimulateArgs {
    /// Ground-truth image file or directory of images
    #[arg(long)]
    pub input: PathBuf,
    #[arg(long, default_value = "paper-like")]
    pub camera: String,
    /// Frames per image; more than one writes a plain-PGM count map
    #[arg(long, default_value_t = 1)]
    pub frames: usize,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub out: PathBuf,
}

pub fn cmd_simulate(args: &SimulateArgs) -> Result<(), CliError> {
    let seed = resolve_seed(args.seed, None)?;
    if args.frames == 0 {
        return Err(CliError::Usage("--frames must be at least 1".into()));
    }
    let cam = CameraModel::preset(&args.camera).map_err(|e| CliError::Usage(e.to_string()))?;
    let files = list_images(&args.input)?;
    create_dir(&args.out)?;
    files
        .par_iter()
        .enumerate()
        .map(|(i, path)| {
            let truth = GroundTruthImage::new(read_image(path)?).map_err(input(format!("reading {}", path.display())))?;
            let out = args.out.join(format!("{}.pgm", stem(path)));
            let s = stream_seed(seed, i as u64);
            let written = if args.frames == 1 {
                let frame = simulate_frame(&truth, &cam, s).map_err(compute("simulating"))?;
                imageio::write_frame_pgm(&out, &frame)
            } else {
                let counts = accumulate_frames(&truth, &cam, args.frames, s).map_err(compute("simulating"))?;
                imageio::write_counts_pgm(&out, &counts)
            };
            written.map_err(input(format!("writing {}", out.display())))
        })
        .collect::<Result<Vec<()>, CliError>>()?;
    write_json(&args.out.join(CONFIG_FILE), &SimulateArgs { seed: Some(seed), ..args.clone() })?;
    info!("simulated {} images into {}", files.len(), args.out.display());
    Ok(())
}

/// Glyph source images for a run without an IDX file.
pub fn synth_sources(count: usize, seed: u64) -> Vec<GroundTruthImage> {
    let (images, _): (IdxArray, IdxArray) = synth_digits(count, seed);
    images.images().expect("glyph array is n x 28 x 28")
}
