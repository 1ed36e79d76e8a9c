use std::fs;
use std::path::{Path, PathBuf};

use photonlab::cae::TrainConfig;
use photonlab::metrics::ContrastMode;
use photonlab::photon_sim::{CameraModel, SimError, PAPER_LIKE};
use photonlab::tv::TvConfig;
use serde::{Deserialize, Serialize};

use crate::error::{input, CliError};

pub const SEED_ENV: &str = "PHOTONLAB_SEED";
pub const CONFIG_FILE: &str = "config.json";

/// A named preset or a fully spelled-out camera.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum CameraSpec {
    Preset(String),
    Explicit(CameraModel),
}

impl Default for CameraSpec {
    fn default() -> Self {
        Self::Preset(PAPER_LIKE.to_string())
    }
}

impl CameraSpec {
    /// Preset name (or `custom`) and the camera it stands for.
    pub fn resolve(&self) -> Result<(String, CameraModel), SimError> {
        match self {
            Self::Preset(name) => Ok((name.clone(), CameraModel::preset(name)?)),
            Self::Explicit(cam) => {
                cam.validate()?;
                Ok(("custom".to_string(), cam.clone()))
            }
        }
    }
}

/// Source images. Without an IDX file, procedural glyphs are generated.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct DatasetSource {
    pub images: Option<PathBuf>,
    pub labels: Option<PathBuf>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SplitCounts {
    pub train: usize,
    pub test: usize,
}

impl Default for SplitCounts {
    fn default() -> Self {
        Self { train: 2000, test: 200 }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ExperimentConfig {
    pub dataset: DatasetSource,
    pub camera: CameraSpec,
    pub split: SplitCounts,
    pub depth: usize,
    pub train: TrainConfig,
    pub tv: TvConfig,
    pub contrast_mode: ContrastMode,
    pub output: PathBuf,
    pub seed: Option<u64>,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            dataset: DatasetSource::default(),
            camera: CameraSpec::default(),
            split: SplitCounts::default(),
            depth: 7,
            train: TrainConfig::default(),
            tv: TvConfig::default(),
            contrast_mode: ContrastMode::Literal,
            output: PathBuf::from("runs/bench"),
            seed: None,
        }
    }
}

impl ExperimentConfig {
    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = fs::read_to_string(path).map_err(input(format!("reading {}", path.display())))?;
        serde_json::from_str(&text).map_err(input(format!("parsing {}", path.display())))
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("config serializes") + "\n"
    }

    /// The seed this run uses; only valid after [`resolve_seed`].
    pub fn seed(&self) -> u64 {
        self.seed.expect("seed resolved")
    }
}

/// Explicit value, else the config's, else `PHOTONLAB_SEED`, else 0.
pub fn resolve_seed(flag: Option<u64>, config: Option<u64>) -> Result<u64, CliError> {
    if let Some(s) = flag.or(config) {
        return Ok(s);
    }
    match std::env::var(SEED_ENV) {
        Ok(v) => v
            .trim()
            .parse()
            .map_err(|_| CliError::Usage(format!("{SEED_ENV}={v:?} is not an unsigned integer"))),
        Err(_) => Ok(0),
    }
}
