use serde::{Deserialize, Serialize};

use super::CaeError;
use crate::image::IMAGE_SIDE;

/// One encoder stage: 3x3 convolution + ReLU, optionally followed by 2x2 ceil pooling.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct EncoderStage {
    pub channels: usize,
    pub pool: bool,
}

/// One decoder stage: nearest upsampling to `target_size` (when it differs
/// from the current size), then 3x3 convolution + ReLU.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct DecoderStage {
    pub target_size: usize,
    pub channels: usize,
}

/// Layer layout of a convolutional auto-encoder on square single-channel
/// images. The final stage is always a 3x3 convolution to one channel
/// followed by a sigmoid.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct CaeArchitecture {
    pub input_size: usize,
    pub encoder: Vec<EncoderStage>,
    pub decoder: Vec<DecoderStage>,
}

/// Activation shape at a named point of the network, channels-last for readability.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct StageShape {
    pub label: String,
    pub height: usize,
    pub width: usize,
    pub channels: usize,
}

const fn enc(channels: usize) -> EncoderStage {
    EncoderStage { channels, pool: true }
}

const fn dec(target_size: usize, channels: usize) -> DecoderStage {
    DecoderStage {
        target_size,
        channels,
    }
}

/// Depth classes counted as weighted (convolutional) layers.
pub const DEPTH_CLASSES: [usize; 3] = [5, 7, 9];

impl CaeArchitecture {
    /// The 28x28 network with `depth_class` convolutional layers.
    pub fn for_depth(depth_class: usize) -> Result<Self, CaeError> {
        let (encoder, decoder) = match depth_class {
            5 => (vec![enc(64), enc(32)], vec![dec(14, 64), dec(28, 64)]),
            7 => (
                vec![enc(64), enc(64), enc(32)],
                vec![dec(7, 64), dec(14, 64), dec(28, 64)],
            ),
            9 => (
                vec![enc(64), enc(64), enc(32), enc(32)],
                vec![dec(4, 32), dec(7, 64), dec(14, 64), dec(28, 64)],
            ),
            other => return Err(CaeError::UnsupportedDepth(other)),
        };
        Self::custom(IMAGE_SIDE, encoder, decoder)
    }

    /// Validates an arbitrary layout; used for small test networks.
    pub fn custom(
        input_size: usize,
        encoder: Vec<EncoderStage>,
        decoder: Vec<DecoderStage>,
    ) -> Result<Self, CaeError> {
        let arch = Self {
            input_size,
            encoder,
            decoder,
        };
        arch.validate()?;
        Ok(arch)
    }

    pub fn validate(&self) -> Result<(), CaeError> {
        let invalid = |msg: String| Err(CaeError::InvalidArchitecture(msg));
        if self.input_size == 0 {
            return invalid("input size must be positive".into());
        }
        if self.encoder.len() != self.decoder.len() {
            return invalid(format!(
                "{} encoder stages but {} decoder stages",
                self.encoder.len(),
                self.decoder.len()
            ));
        }
        if self
            .encoder
            .iter()
            .map(|s| s.channels)
            .chain(self.decoder.iter().map(|s| s.channels))
            .any(|c| c == 0)
        {
            return invalid("every stage needs at least one channel".into());
        }
        let mut size = self.input_size;
        for stage in &self.encoder {
            if stage.pool {
                size = size.div_ceil(2);
            }
        }
        for (i, stage) in self.decoder.iter().enumerate() {
            let t = stage.target_size;
            if t != size && t != 2 * size && t + 1 != 2 * size {
                return invalid(format!(
                    "decoder stage {i}: cannot upsample {size} to {t}"
                ));
            }
            size = t;
        }
        if size != self.input_size {
            return invalid(format!(
                "decoder ends at {size}, expected {}",
                self.input_size
            ));
        }
        Ok(())
    }

    /// Encoder + decoder + final convolution.
    pub fn weighted_layers(&self) -> usize {
        self.encoder.len() + self.decoder.len() + 1
    }

    /// `(in_channels, out_channels)` of every convolution in declaration order.
    pub fn conv_channels(&self) -> Vec<(usize, usize)> {
        let mut out = Vec::with_capacity(self.weighted_layers());
        let mut ch = 1;
        for s in &self.encoder {
            out.push((ch, s.channels));
            ch = s.channels;
        }
        for s in &self.decoder {
            out.push((ch, s.channels));
            ch = s.channels;
        }
        out.push((ch, 1));
        out
    }

    pub fn param_count(&self) -> usize {
        self.conv_channels()
            .iter()
            .map(|&(ci, co)| co * ci * 9 + co)
            .sum()
    }

    /// Shapes after every stage, from the input to the reconstruction.
    pub fn shape_trace(&self) -> Vec<StageShape> {
        let shape = |label: String, size: usize, channels: usize| StageShape {
            label,
            height: size,
            width: size,
            channels,
        };
        let mut size = self.input_size;
        let mut trace = vec![shape("input".into(), size, 1)];
        for (i, s) in self.encoder.iter().enumerate() {
            trace.push(shape(format!("encoder.{i}.conv"), size, s.channels));
            if s.pool {
                size = size.div_ceil(2);
                trace.push(shape(format!("encoder.{i}.pool"), size, s.channels));
            }
        }
        for (i, s) in self.decoder.iter().enumerate() {
            size = s.target_size;
            trace.push(shape(format!("decoder.{i}.conv"), size, s.channels));
        }
        trace.push(shape("output".into(), size, 1));
        trace
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn shape_of(arch: &CaeArchitecture, label: &str) -> (usize, usize, usize) {
        let s = arch.shape_trace().into_iter().find(|s| s.label == label).unwrap();
        (s.height, s.width, s.channels)
    }

    #[test]
    fn depth7_matches_described_feature_maps() {
        let arch = CaeArchitecture::for_depth(7).unwrap();
        assert_eq!(shape_of(&arch, "encoder.0.conv"), (28, 28, 64));
        assert_eq!(shape_of(&arch, "encoder.0.pool"), (14, 14, 64));
        assert_eq!(shape_of(&arch, "encoder.2.pool"), (4, 4, 32));
        assert_eq!(shape_of(&arch, "decoder.2.conv"), (28, 28, 64));
        assert_eq!(shape_of(&arch, "output"), (28, 28, 1));
    }

    #[test]
    fn depth5_bottleneck_is_7x7() {
        let arch = CaeArchitecture::for_depth(5).unwrap();
        assert_eq!(shape_of(&arch, "encoder.1.pool"), (7, 7, 32));
    }

    #[test]
    fn depth9_bottleneck_is_2x2() {
        let arch = CaeArchitecture::for_depth(9).unwrap();
        assert_eq!(shape_of(&arch, "encoder.3.pool"), (2, 2, 32));
    }

    #[test]
    fn weighted_layers_equal_depth_class() {
        for d in DEPTH_CLASSES {
            let arch = CaeArchitecture::for_depth(d).unwrap();
            assert_eq!(arch.weighted_layers(), d);
            assert_eq!(arch.conv_channels().len(), d);
            let trace = arch.shape_trace();
            let last = trace.last().unwrap();
            assert_eq!((last.height, last.width, last.channels), (28, 28, 1));
        }
    }

    #[test]
    fn depth7_param_count_closed_form() {
        // convs: 1->64, 64->64, 64->32, 32->64, 64->64, 64->64, 64->1
        let expected = (64 * 9 + 64)
            + (64 * 64 * 9 + 64)
            + (32 * 64 * 9 + 32)
            + (64 * 32 * 9 + 64)
            + 2 * (64 * 64 * 9 + 64)
            + (64 * 9 + 1);
        assert_eq!(CaeArchitecture::for_depth(7).unwrap().param_count(), expected);
        assert_eq!(expected, 148_961);
    }

    #[test]
    fn unsupported_depth() {
        assert!(matches!(
            CaeArchitecture::for_depth(6),
            Err(CaeError::UnsupportedDepth(6))
        ));
    }

    #[test]
    fn inconsistent_layouts_rejected() {
        assert!(CaeArchitecture::custom(28, vec![enc(4)], vec![]).is_err());
        assert!(CaeArchitecture::custom(28, vec![enc(4)], vec![dec(27, 4)]).is_err());
        assert!(CaeArchitecture::custom(8, vec![enc(4), enc(4)], vec![dec(4, 4), dec(8, 4)]).is_ok());
    }
}
