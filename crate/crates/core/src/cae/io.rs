//! `CAEW` weight files: magic, u32 LE version, u32 LE header length, a JSON
//! header describing the layout, then every parameter as f32 LE (kernels
//! then bias, layer by layer).

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{CaeArchitecture, CaeError, CaeWeights};
use crate::nn::ConvLayer;
use crate::tensor::Tensor;

pub const WEIGHTS_MAGIC: &[u8; 4] = b"CAEW";
pub const WEIGHTS_VERSION: u32 = 1;
const PREAMBLE: usize = 12;

#[derive(Serialize, Deserialize)]
struct LayerShape {
    kernels: Vec<usize>,
    bias: Vec<usize>,
}

#[derive(Serialize, Deserialize)]
struct Header {
    weighted_layers: usize,
    #[serde(flatten)]
    arch: CaeArchitecture,
    layers: Vec<LayerShape>,
}

pub fn encode_weights(weights: &CaeWeights<f32>) -> Vec<u8> {
    let arch = weights.architecture();
    let header = Header {
        weighted_layers: arch.weighted_layers(),
        arch: arch.clone(),
        layers: weights
            .layers()
            .iter()
            .map(|l| LayerShape {
                kernels: l.kernels.shape().to_vec(),
                bias: l.bias.shape().to_vec(),
            })
            .collect(),
    };
    let json = serde_json::to_vec(&header).expect("header serialises");
    let mut out = Vec::with_capacity(PREAMBLE + json.len() + 4 * weights.param_count());
    out.extend_from_slice(WEIGHTS_MAGIC);
    out.extend_from_slice(&WEIGHTS_VERSION.to_le_bytes());
    out.extend_from_slice(&(json.len() as u32).to_le_bytes());
    out.extend_from_slice(&json);
    for l in weights.layers() {
        for v in l.kernels.data().iter().chain(l.bias.data()) {
            out.extend_from_slice(&v.to_le_bytes());
        }
    }
    out
}

pub fn decode_weights(bytes: &[u8]) -> Result<CaeWeights<f32>, CaeError> {
    if bytes.len() < 4 || &bytes[..4] != WEIGHTS_MAGIC {
        return Err(CaeError::BadMagic);
    }
    if bytes.len() < PREAMBLE {
        return Err(CaeError::Truncated {
            expected: PREAMBLE,
            got: bytes.len(),
        });
    }
    let version = u32::from_le_bytes(bytes[4..8].try_into().unwrap());
    if version != WEIGHTS_VERSION {
        return Err(CaeError::UnsupportedVersion(version));
    }
    let header_len = u32::from_le_bytes(bytes[8..12].try_into().unwrap()) as usize;
    let body_start = PREAMBLE + header_len;
    if bytes.len() < body_start {
        return Err(CaeError::Truncated {
            expected: body_start,
            got: bytes.len(),
        });
    }
    let header: Header = serde_json::from_slice(&bytes[PREAMBLE..body_start])
        .map_err(|e| CaeError::BadHeader(e.to_string()))?;
    header.arch.validate()?;
    if header.weighted_layers != header.arch.weighted_layers() {
        return Err(CaeError::BadHeader(format!(
            "header claims {} weighted layers, layout has {}",
            header.weighted_layers,
            header.arch.weighted_layers()
        )));
    }
    let expected = header.arch.conv_channels();
    if expected.len() != header.layers.len() {
        return Err(CaeError::LayerCount {
            expected: expected.len(),
            got: header.layers.len(),
        });
    }
    for (i, ((ci, co), shape)) in expected.iter().zip(&header.layers).enumerate() {
        if shape.kernels != [*co, *ci, 3, 3] || shape.bias != [*co] {
            return Err(CaeError::LayerShape {
                layer: i,
                expected: vec![*co, *ci, 3, 3],
                got: shape.kernels.clone(),
            });
        }
    }
    let n_params = header.arch.param_count();
    let body = &bytes[body_start..];
    if body.len() != 4 * n_params {
        return Err(CaeError::Truncated {
            expected: body_start + 4 * n_params,
            got: bytes.len(),
        });
    }
    let mut values = body
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes(c.try_into().unwrap()));
    let mut take = |n: usize| -> Vec<f32> { values.by_ref().take(n).collect() };
    let layers = header
        .layers
        .iter()
        .map(|s| {
            let k = take(s.kernels.iter().product());
            let b = take(s.bias.iter().product());
            Ok(ConvLayer::new(
                Tensor::from_vec(&s.kernels, k)?,
                Tensor::from_vec(&s.bias, b)?,
            )?)
        })
        .collect::<Result<Vec<_>, CaeError>>()?;
    CaeWeights::from_layers(header.arch, layers)
}

pub fn save_weights(weights: &CaeWeights<f32>, path: &Path) -> Result<(), CaeError> {
    fs::write(path, encode_weights(weights)).map_err(|e| CaeError::Io {
        path: path.display().to_string(),
        source: e,
    })
}

pub fn load_weights(path: &Path) -> Result<CaeWeights<f32>, CaeError> {
    let bytes = fs::read(path).map_err(|e| CaeError::Io {
        path: path.display().to_string(),
        source: e,
    })?;
    decode_weights(&bytes)
}

/// Bytes before the parameter payload.
pub fn header_size(weights: &CaeWeights<f32>) -> usize {
    let bytes = encode_weights(weights);
    PREAMBLE + u32::from_le_bytes(bytes[8..12].try_into().unwrap()) as usize
}
