//! Image-domain value types shared by the simulator, the solvers and the metrics.

use thiserror::Error;

use crate::tensor::{Real, Tensor};

/// Side length of every image in the pipeline.
pub const IMAGE_SIDE: usize = 28;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ImageError {
    #[error("pixel buffer of length {len} does not match {height}x{width}")]
    Length { height: usize, width: usize, len: usize },
    #[error("pixel {index} has value {value}, outside [0, 1]")]
    OutOfRange { index: usize, value: f64 },
    #[error("pixel {index} has value {value}, frames must be binary")]
    NotBinary { index: usize, value: f64 },
    #[error("pixel {index} is not a nonnegative integer count: {value}")]
    NotCount { index: usize, value: f64 },
    #[error("expected a {expected_h}x{expected_w} image, got {height}x{width}")]
    Size {
        expected_h: usize,
        expected_w: usize,
        height: usize,
        width: usize,
    },
}

/// A real-valued intensity map (reconstructions, flux maps, general images).
#[derive(Clone, Debug, PartialEq)]
pub struct Image {
    height: usize,
    width: usize,
    data: Vec<f64>,
}

impl Image {
    pub fn new(height: usize, width: usize, data: Vec<f64>) -> Result<Self, ImageError> {
        if data.len() != height * width {
            return Err(ImageError::Length {
                height,
                width,
                len: data.len(),
            });
        }
        Ok(Self { height, width, data })
    }

    pub fn zeros(height: usize, width: usize) -> Self {
        Self::filled(height, width, 0.0)
    }

    pub fn filled(height: usize, width: usize, value: f64) -> Self {
        Self {
            height,
            width,
            data: vec![value; height * width],
        }
    }

    pub fn from_fn(height: usize, width: usize, mut f: impl FnMut(usize, usize) -> f64) -> Self {
        let data = (0..height * width).map(|i| f(i / width, i % width)).collect();
        Self { height, width, data }
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn into_data(self) -> Vec<f64> {
        self.data
    }

    pub fn get(&self, row: usize, col: usize) -> f64 {
        self.data[row * self.width + col]
    }

    pub fn row(&self, row: usize) -> &[f64] {
        &self.data[row * self.width..(row + 1) * self.width]
    }

    pub fn mean(&self) -> f64 {
        self.data.iter().sum::<f64>() / self.data.len().max(1) as f64
    }

    pub fn min(&self) -> f64 {
        self.data.iter().copied().fold(f64::INFINITY, f64::min)
    }

    pub fn max(&self) -> f64 {
        self.data.iter().copied().fold(f64::NEG_INFINITY, f64::max)
    }

    pub fn same_size(&self, other: &Image) -> bool {
        self.height == other.height && self.width == other.width
    }

    /// `[1, 1, h, w]` tensor view for the network.
    pub fn to_tensor<T: Real>(&self) -> Tensor<T> {
        Tensor::from_vec(
            &[1, 1, self.height, self.width],
            self.data.iter().map(|&v| T::lit(v)).collect(),
        )
        .expect("image dimensions are consistent")
    }
}

/// Clean object intensities in `[0, 1]`.
#[derive(Clone, Debug, PartialEq)]
pub struct GroundTruthImage(Image);

impl GroundTruthImage {
    pub fn new(image: Image) -> Result<Self, ImageError> {
        if let Some((index, &value)) = image
            .data
            .iter()
            .enumerate()
            .find(|(_, v)| !(0.0..=1.0).contains(*v))
        {
            return Err(ImageError::OutOfRange { index, value });
        }
        Ok(Self(image))
    }

    /// From 8-bit gray levels, normalised by 255.
    pub fn from_u8(height: usize, width: usize, pixels: &[u8]) -> Result<Self, ImageError> {
        let image = Image::new(height, width, pixels.iter().map(|&p| p as f64 / 255.0).collect())?;
        Ok(Self(image))
    }

    pub fn image(&self) -> &Image {
        &self.0
    }

    pub fn into_image(self) -> Image {
        self.0
    }
}

/// One binarised camera exposure: every pixel is 0 or 1.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct RawFrame {
    height: usize,
    width: usize,
    bits: Vec<u8>,
}

impl RawFrame {
    pub fn new(height: usize, width: usize, bits: Vec<u8>) -> Result<Self, ImageError> {
        if bits.len() != height * width {
            return Err(ImageError::Length {
                height,
                width,
                len: bits.len(),
            });
        }
        if let Some((index, &b)) = bits.iter().enumerate().find(|(_, b)| **b > 1) {
            return Err(ImageError::NotBinary {
                index,
                value: b as f64,
            });
        }
        Ok(Self { height, width, bits })
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn bits(&self) -> &[u8] {
        &self.bits
    }

    pub fn ones_fraction(&self) -> f64 {
        self.bits.iter().map(|&b| b as usize).sum::<usize>() as f64 / self.bits.len().max(1) as f64
    }

    /// Detections as `{0.0, 1.0}` values.
    pub fn to_image(&self) -> Image {
        Image {
            height: self.height,
            width: self.width,
            data: self.bits.iter().map(|&b| b as f64).collect(),
        }
    }

    pub fn to_tensor<T: Real>(&self) -> Tensor<T> {
        Tensor::from_vec(
            &[1, 1, self.height, self.width],
            self.bits.iter().map(|&b| if b == 1 { T::one() } else { T::zero() }).collect(),
        )
        .expect("frame dimensions are consistent")
    }
}

/// Per-pixel photon-event counts, e.g. a sum of binary frames.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct CountMap {
    height: usize,
    width: usize,
    counts: Vec<u32>,
}

impl CountMap {
    pub fn new(height: usize, width: usize, counts: Vec<u32>) -> Result<Self, ImageError> {
        if counts.len() != height * width {
            return Err(ImageError::Length {
                height,
                width,
                len: counts.len(),
            });
        }
        Ok(Self { height, width, counts })
    }

    /// Accepts real-valued data only if every entry is a nonnegative integer.
    pub fn from_image(image: &Image) -> Result<Self, ImageError> {
        let mut counts = Vec::with_capacity(image.data.len());
        for (index, &value) in image.data.iter().enumerate() {
            if !(value >= 0.0 && value.fract() == 0.0 && value <= u32::MAX as f64) {
                return Err(ImageError::NotCount { index, value });
            }
            counts.push(value as u32);
        }
        Ok(Self {
            height: image.height,
            width: image.width,
            counts,
        })
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn counts(&self) -> &[u32] {
        &self.counts
    }

    pub fn counts_mut(&mut self) -> &mut [u32] {
        &mut self.counts
    }

    pub fn max_count(&self) -> u32 {
        self.counts.iter().copied().max().unwrap_or(0)
    }

    pub fn to_image(&self) -> Image {
        Image {
            height: self.height,
            width: self.width,
            data: self.counts.iter().map(|&c| c as f64).collect(),
        }
    }
}

impl From<&RawFrame> for CountMap {
    fn from(frame: &RawFrame) -> Self {
        Self {
            height: frame.height,
            width: frame.width,
            counts: frame.bits.iter().map(|&b| b as u32).collect(),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn truth_rejects_out_of_range() {
        let img = Image::new(1, 2, vec![0.5, 1.2]).unwrap();
        assert_eq!(
            GroundTruthImage::new(img).unwrap_err(),
            ImageError::OutOfRange { index: 1, value: 1.2 }
        );
    }

    #[test]
    fn frame_must_be_binary() {
        assert!(RawFrame::new(1, 3, vec![0, 1, 1]).is_ok());
        assert!(matches!(
            RawFrame::new(1, 3, vec![0, 2, 1]).unwrap_err(),
            ImageError::NotBinary { index: 1, .. }
        ));
    }

    #[test]
    fn counts_from_image_require_integers() {
        let ok = Image::new(1, 2, vec![0.0, 3.0]).unwrap();
        assert_eq!(CountMap::from_image(&ok).unwrap().counts(), &[0, 3]);
        for bad in [0.5, -1.0, f64::NAN] {
            let img = Image::new(1, 2, vec![0.0, bad]).unwrap();
            assert!(matches!(
                CountMap::from_image(&img).unwrap_err(),
                ImageError::NotCount { index: 1, .. }
            ));
        }
    }
}
