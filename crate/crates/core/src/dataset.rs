//! IDX containers, seeded train/test splits and cached (frame, truth) pair sets.

use std::fs;
use std::path::{Path, PathBuf};

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::cae::TrainingPair;
use crate::image::{GroundTruthImage, ImageError, RawFrame};
use crate::imageio::{self, ImageIoError};
use crate::photon_sim::{simulate_frame, CameraModel, SimError};
use crate::rng::{stream_seed, StreamRng};

#[derive(Debug, Error)]
pub enum DatasetError {
    #[error("bad IDX magic {0:02x?}")]
    BadMagic([u8; 4]),
    #[error("unsupported IDX element type 0x{0:02x}")]
    UnsupportedType(u8),
    #[error("IDX payload holds {got} bytes, header implies {expected}")]
    Truncated { expected: usize, got: usize },
    #[error("IDX file has {extra} bytes past the declared payload")]
    TrailingBytes { extra: usize },
    #[error("expected {expected}, found IDX shape {shape:?} of type {kind:?}")]
    Layout {
        expected: &'static str,
        shape: Vec<usize>,
        kind: IdxType,
    },
    #[error("split needs {needed} images but only {available} are available")]
    Insufficient { needed: usize, available: usize },
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}: {source}")]
    Manifest {
        path: PathBuf,
        #[source]
        source: serde_json::Error,
    },
    #[error(transparent)]
    ImageIo(#[from] ImageIoError),
    #[error(transparent)]
    Image(#[from] ImageError),
    #[error(transparent)]
    Sim(#[from] SimError),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum IdxType {
    U8,
    I8,
    I16,
    I32,
    F32,
    F64,
}

impl IdxType {
    pub fn from_code(code: u8) -> Option<Self> {
        Some(match code {
            0x08 => Self::U8,
            0x09 => Self::I8,
            0x0B => Self::I16,
            0x0C => Self::I32,
            0x0D => Self::F32,
            0x0E => Self::F64,
            _ => return None,
        })
    }

    pub fn code(self) -> u8 {
        match self {
            Self::U8 => 0x08,
            Self::I8 => 0x09,
            Self::I16 => 0x0B,
            Self::I32 => 0x0C,
            Self::F32 => 0x0D,
            Self::F64 => 0x0E,
        }
    }

    pub fn size(self) -> usize {
        match self {
            Self::U8 | Self::I8 => 1,
            Self::I16 => 2,
            Self::I32 | Self::F32 => 4,
            Self::F64 => 8,
        }
    }
}

/// An IDX array: element type, extents and the raw big-endian payload.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct IdxArray {
    kind: IdxType,
    shape: Vec<usize>,
    payload: Vec<u8>,
}

impl IdxArray {
    pub fn from_u8(shape: Vec<usize>, payload: Vec<u8>) -> Result<Self, DatasetError> {
        let expected: usize = shape.iter().product();
        if payload.len() != expected {
            return Err(DatasetError::Truncated {
                expected,
                got: payload.len(),
            });
        }
        Ok(Self {
            kind: IdxType::U8,
            shape,
            payload,
        })
    }

    pub fn kind(&self) -> IdxType {
        self.kind
    }

    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    pub fn payload(&self) -> &[u8] {
        &self.payload
    }

    pub fn len(&self) -> usize {
        self.shape.first().copied().unwrap_or(0)
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = vec![0, 0, self.kind.code(), self.shape.len() as u8];
        for &d in &self.shape {
            out.extend_from_slice(&(d as u32).to_be_bytes());
        }
        out.extend_from_slice(&self.payload);
        out
    }

    /// Unsigned-byte `[n, h, w]` images scaled by 1/255.
    pub fn images(&self) -> Result<Vec<GroundTruthImage>, DatasetError> {
        let &[n, h, w] = self.shape.as_slice() else {
            return Err(self.layout("u8 images [n, h, w]"));
        };
        if self.kind != IdxType::U8 {
            return Err(self.layout("u8 images [n, h, w]"));
        }
        (0..n)
            .map(|i| Ok(GroundTruthImage::from_u8(h, w, &self.payload[i * h * w..(i + 1) * h * w])?))
            .collect()
    }

    pub fn labels(&self) -> Result<Vec<u8>, DatasetError> {
        if self.kind != IdxType::U8 || self.shape.len() != 1 {
            return Err(self.layout("u8 labels [n]"));
        }
        Ok(self.payload.clone())
    }

    fn layout(&self, expected: &'static str) -> DatasetError {
        DatasetError::Layout {
            expected,
            shape: self.shape.clone(),
            kind: self.kind,
        }
    }
}

pub fn parse_idx(bytes: &[u8]) -> Result<IdxArray, DatasetError> {
    if bytes.len() < 4 {
        let mut m = [0u8; 4];
        m[..bytes.len()].copy_from_slice(bytes);
        return Err(DatasetError::BadMagic(m));
    }
    let magic: [u8; 4] = bytes[..4].try_into().unwrap();
    if magic[0] != 0 || magic[1] != 0 || magic[3] == 0 {
        return Err(DatasetError::BadMagic(magic));
    }
    let kind = IdxType::from_code(magic[2]).ok_or(DatasetError::UnsupportedType(magic[2]))?;
    let ndims = magic[3] as usize;
    let header = 4 + 4 * ndims;
    if bytes.len() < header {
        return Err(DatasetError::Truncated {
            expected: header,
            got: bytes.len(),
        });
    }
    let shape: Vec<usize> = bytes[4..header]
        .chunks_exact(4)
        .map(|c| u32::from_be_bytes(c.try_into().unwrap()) as usize)
        .collect();
    let expected = shape.iter().product::<usize>() * kind.size();
    let got = bytes.len() - header;
    if got < expected {
        return Err(DatasetError::Truncated { expected, got });
    }
    if got > expected {
        return Err(DatasetError::TrailingBytes { extra: got - expected });
    }
    Ok(IdxArray {
        kind,
        shape,
        payload: bytes[header..].to_vec(),
    })
}

pub fn read_idx(path: &Path) -> Result<IdxArray, DatasetError> {
    let bytes = fs::read(path).map_err(|source| DatasetError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    parse_idx(&bytes)
}

pub fn write_idx(path: &Path, array: &IdxArray) -> Result<(), DatasetError> {
    fs::write(path, array.to_bytes()).map_err(|source| DatasetError::Io {
        path: path.to_path_buf(),
        source,
    })
}

/// Disjoint index lists: the first `train_count` and next `test_count` entries of a seeded shuffle.
pub fn make_split(
    available: usize,
    train_count: usize,
    test_count: usize,
    seed: u64,
) -> Result<(Vec<usize>, Vec<usize>), DatasetError> {
    let needed = train_count + test_count;
    if needed > available {
        return Err(DatasetError::Insufficient { needed, available });
    }
    let mut order: Vec<usize> = (0..available).collect();
    order.shuffle(&mut StreamRng::seed_from_u64(seed));
    let test = order[train_count..needed].to_vec();
    order.truncate(train_count);
    Ok((order, test))
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct PairRecord {
    /// Position of the source image in the IDX file.
    pub source_index: usize,
    pub stream_seed: u64,
    pub frame: String,
    pub truth: String,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PairManifest {
    pub dataset: String,
    pub split: String,
    pub camera_preset: String,
    pub camera: CameraModel,
    pub master_seed: u64,
    pub pairs: Vec<PairRecord>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Pair {
    pub source_index: usize,
    pub stream_seed: u64,
    pub frame: RawFrame,
    pub truth: GroundTruthImage,
}

#[derive(Clone, Debug, PartialEq)]
pub struct PairSet {
    pub dataset: String,
    pub split: String,
    pub camera_preset: String,
    pub camera: CameraModel,
    pub master_seed: u64,
    pub pairs: Vec<Pair>,
}

impl PairSet {
    pub fn len(&self) -> usize {
        self.pairs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pairs.is_empty()
    }

    pub fn training_pairs(&self) -> Vec<TrainingPair> {
        self.pairs.iter().map(|p| (p.frame.clone(), p.truth.clone())).collect()
    }

    pub fn frames(&self) -> Vec<RawFrame> {
        self.pairs.iter().map(|p| p.frame.clone()).collect()
    }

    pub fn truths(&self) -> Vec<GroundTruthImage> {
        self.pairs.iter().map(|p| p.truth.clone()).collect()
    }
}

/// One frame per image. Frame `k` is simulated from stream `first_stream + k` of `master_seed`.
pub fn build_pairs(
    sources: &[(usize, GroundTruthImage)],
    cam: &CameraModel,
    master_seed: u64,
    first_stream: u64,
) -> Result<Vec<Pair>, DatasetError> {
    cam.validate()?;
    sources
        .par_iter()
        .enumerate()
        .map(|(k, (source_index, truth))| {
            let seed = stream_seed(master_seed, first_stream + k as u64);
            Ok(Pair {
                source_index: *source_index,
                stream_seed: seed,
                frame: simulate_frame(truth, cam, seed)?,
                truth: truth.clone(),
            })
        })
        .collect()
}

pub const MANIFEST_FILE: &str = "manifest.json";

fn pair_file_names(k: usize) -> (String, String) {
    (format!("frames/{k:05}.pgm"), format!("truth/{k:05}.pgm"))
}

/// Writes `frames/`, `truth/` and `manifest.json` under `dir`.
pub fn write_pair_cache(dir: &Path, set: &PairSet) -> Result<PairManifest, DatasetError> {
    for sub in ["frames", "truth"] {
        let p = dir.join(sub);
        fs::create_dir_all(&p).map_err(|source| DatasetError::Io { path: p, source })?;
    }
    let mut records = Vec::with_capacity(set.len());
    for (k, pair) in set.pairs.iter().enumerate() {
        let (frame, truth) = pair_file_names(k);
        imageio::write_frame_pgm(&dir.join(&frame), &pair.frame)?;
        imageio::write_pgm(&dir.join(&truth), pair.truth.image())?;
        records.push(PairRecord {
            source_index: pair.source_index,
            stream_seed: pair.stream_seed,
            frame,
            truth,
        });
    }
    let manifest = PairManifest {
        dataset: set.dataset.clone(),
        split: set.split.clone(),
        camera_preset: set.camera_preset.clone(),
        camera: set.camera.clone(),
        master_seed: set.master_seed,
        pairs: records,
    };
    let path = dir.join(MANIFEST_FILE);
    let text = serde_json::to_string_pretty(&manifest).expect("manifest serializes");
    fs::write(&path, text + "\n").map_err(|source| DatasetError::Io { path, source })?;
    Ok(manifest)
}

pub fn read_manifest(dir: &Path) -> Result<PairManifest, DatasetError> {
    let path = dir.join(MANIFEST_FILE);
    let text = fs::read_to_string(&path).map_err(|source| DatasetError::Io {
        path: path.clone(),
        source,
    })?;
    serde_json::from_str(&text).map_err(|source| DatasetError::Manifest { path, source })
}

pub fn load_pair_cache(dir: &Path) -> Result<PairSet, DatasetError> {
    let manifest = read_manifest(dir)?;
    let pairs = manifest
        .pairs
        .iter()
        .map(|r| {
            let truth = GroundTruthImage::new(imageio::read_gray(&dir.join(&r.truth))?)?;
            Ok(Pair {
                source_index: r.source_index,
                stream_seed: r.stream_seed,
                frame: imageio::read_frame(&dir.join(&r.frame))?,
                truth,
            })
        })
        .collect::<Result<Vec<_>, DatasetError>>()?;
    Ok(PairSet {
        dataset: manifest.dataset,
        split: manifest.split,
        camera_preset: manifest.camera_preset,
        camera: manifest.camera,
        master_seed: manifest.master_seed,
        pairs,
    })
}

/// Re-simulates every frame from its recorded truth, camera and stream seed.
pub fn regenerate_frames(set: &PairSet) -> Result<Vec<RawFrame>, DatasetError> {
    set.pairs
        .par_iter()
        .map(|p| Ok(simulate_frame(&p.truth, &set.camera, p.stream_seed)?))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn fixture() -> Vec<u8> {
        let mut b = vec![0, 0, 8, 3, 0, 0, 0, 2, 0, 0, 0, 28, 0, 0, 0, 28];
        b.extend((0..1568).map(|i| (i % 256) as u8));
        b
    }

    #[test]
    fn parses_image_fixture() {
        let a = parse_idx(&fixture()).unwrap();
        assert_eq!(a.shape(), &[2, 28, 28]);
        let imgs = a.images().unwrap();
        assert_eq!(imgs.len(), 2);
        assert_eq!(imgs[0].image().get(0, 1), 1.0 / 255.0);
        assert_eq!(a.to_bytes(), fixture());
    }

    #[test]
    fn parses_label_fixture() {
        let a = parse_idx(&[0, 0, 8, 1, 0, 0, 0, 2, 7, 3]).unwrap();
        assert_eq!(a.labels().unwrap(), vec![7, 3]);
        assert!(a.images().is_err());
    }

    #[test]
    fn distinct_errors() {
        let mut b = fixture();
        b[0] = 1;
        assert!(matches!(parse_idx(&b), Err(DatasetError::BadMagic(_))));
        assert!(matches!(parse_idx(&[0, 0]), Err(DatasetError::BadMagic(_))));
        let mut b = fixture();
        b[2] = 0x0A;
        assert!(matches!(parse_idx(&b), Err(DatasetError::UnsupportedType(0x0A))));
        let b = fixture();
        assert!(matches!(
            parse_idx(&b[..b.len() - 1]),
            Err(DatasetError::Truncated { expected: 1568, got: 1567 })
        ));
        let mut b = fixture();
        b.push(0);
        assert!(matches!(parse_idx(&b), Err(DatasetError::TrailingBytes { extra: 1 })));
    }

    #[test]
    fn split_sizes_and_disjointness() {
        let (train, test) = make_split(11_690, 10_521, 1_169, 3).unwrap();
        assert_eq!((train.len(), test.len()), (10_521, 1_169));
        let mut all: Vec<usize> = train.iter().chain(&test).copied().collect();
        all.sort_unstable();
        all.dedup();
        assert_eq!(all.len(), 11_690);
        assert_eq!(make_split(11_690, 10_521, 1_169, 3).unwrap().0, train);
        assert!(matches!(
            make_split(10, 8, 3, 0),
            Err(DatasetError::Insufficient { needed: 11, available: 10 })
        ));
    }
}
