//! Reading and writing images, frames and count maps.
//!
//! 8-bit exports clamp to [0,1] and round half-up. Count maps use plain
//! (ASCII) PGM with a 16-bit sample range. `F32I` files hold raw `f32`
//! intensities: magic, height, width and a reserved word (all `u32` LE
//! after the magic), followed by the row-major samples.

use std::fs;
use std::path::{Path, PathBuf};

use ::image::codecs::pnm::{PnmEncoder, PnmSubtype, SampleEncoding};
use ::image::{DynamicImage, ExtendedColorType, GrayImage, ImageEncoder, ImageFormat, ImageReader};
use thiserror::Error;

use crate::image::{CountMap, Image, ImageError, RawFrame};

pub const F32I_MAGIC: &[u8; 4] = b"F32I";
pub const F32I_HEADER_LEN: usize = 16;

#[derive(Debug, Error)]
pub enum ImageIoError {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}: {message}")]
    Codec { path: PathBuf, message: String },
    #[error("{path}: unsupported extension (expected .pgm, .png or .f32)")]
    Extension { path: PathBuf },
    #[error("{path}: not an F32I file")]
    BadMagic { path: PathBuf },
    #[error("{path}: F32I payload holds {got} bytes, header implies {expected}")]
    Truncated { path: PathBuf, expected: usize, got: usize },
    #[error(transparent)]
    Image(#[from] ImageError),
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> ImageIoError + '_ {
    move |source| ImageIoError::Io {
        path: path.to_path_buf(),
        source,
    }
}

fn codec_err(path: &Path) -> impl FnOnce(::image::ImageError) -> ImageIoError + '_ {
    move |e| match e {
        ::image::ImageError::IoError(source) => ImageIoError::Io {
            path: path.to_path_buf(),
            source,
        },
        other => ImageIoError::Codec {
            path: path.to_path_buf(),
            message: other.to_string(),
        },
    }
}

/// Maps [0,1] to 0..=255, rounding half-up.
pub fn to_u8(v: f64) -> u8 {
    (v.clamp(0.0, 1.0) * 255.0 + 0.5).floor() as u8
}

pub fn to_gray8(img: &Image) -> Vec<u8> {
    img.data().iter().map(|&v| to_u8(v)).collect()
}

fn gray_image(img: &Image) -> GrayImage {
    GrayImage::from_raw(img.width() as u32, img.height() as u32, to_gray8(img)).expect("buffer size")
}

/// Binary PGM (P5, maxval 255).
pub fn write_pgm(path: &Path, img: &Image) -> Result<(), ImageIoError> {
    write_graymap(path, &to_gray8(img), img.height(), img.width(), SampleEncoding::Binary, ExtendedColorType::L8)
}

fn write_graymap(
    path: &Path,
    bytes: &[u8],
    height: usize,
    width: usize,
    encoding: SampleEncoding,
    color: ExtendedColorType,
) -> Result<(), ImageIoError> {
    let mut out = Vec::new();
    PnmEncoder::new(&mut out)
        .with_subtype(PnmSubtype::Graymap(encoding))
        .write_image(bytes, width as u32, height as u32, color)
        .map_err(codec_err(path))?;
    fs::write(path, out).map_err(io_err(path))
}

pub fn write_png(path: &Path, img: &Image) -> Result<(), ImageIoError> {
    gray_image(img)
        .save_with_format(path, ImageFormat::Png)
        .map_err(codec_err(path))
}

/// Frames are stored as 0/255 binary PGM.
pub fn write_frame_pgm(path: &Path, frame: &RawFrame) -> Result<(), ImageIoError> {
    write_pgm(path, &frame.to_image())
}

/// Plain PGM (P2) holding raw counts, maxval set to the largest count.
pub fn write_counts_pgm(path: &Path, counts: &CountMap) -> Result<(), ImageIoError> {
    let maxval = counts.max_count().clamp(1, u16::MAX as u32);
    let mut out = format!("P2\n{} {}\n{}\n", counts.width(), counts.height(), maxval);
    for row in counts.counts().chunks(counts.width().max(1)) {
        let line: Vec<String> = row.iter().map(|c| c.min(&maxval).to_string()).collect();
        out.push_str(&line.join(" "));
        out.push('\n');
    }
    fs::write(path, out).map_err(io_err(path))
}

fn read_dynamic(path: &Path) -> Result<DynamicImage, ImageIoError> {
    ImageReader::open(path)
        .map_err(io_err(path))?
        .with_guessed_format()
        .map_err(io_err(path))?
        .decode()
        .map_err(codec_err(path))
}

/// Reads an 8-bit grayscale PGM or PNG as intensities in [0,1].
pub fn read_gray(path: &Path) -> Result<Image, ImageIoError> {
    let g = read_dynamic(path)?.into_luma8();
    let data = g.as_raw().iter().map(|&v| v as f64 / 255.0).collect();
    Ok(Image::new(g.height() as usize, g.width() as usize, data)?)
}

/// Any pixel at or above mid-scale reads as a detection.
pub fn read_frame(path: &Path) -> Result<RawFrame, ImageIoError> {
    let g = read_dynamic(path)?.into_luma8();
    let bits = g.as_raw().iter().map(|&v| u8::from(v >= 128)).collect();
    Ok(RawFrame::new(g.height() as usize, g.width() as usize, bits)?)
}

/// Reads a plain PGM count map. Sample values are taken as-is; maxval only bounds them.
pub fn read_counts(path: &Path) -> Result<CountMap, ImageIoError> {
    let text = fs::read_to_string(path).map_err(io_err(path))?;
    parse_counts_pgm(&text).map_err(|message| ImageIoError::Codec {
        path: path.to_path_buf(),
        message,
    })
}

fn parse_counts_pgm(text: &str) -> Result<CountMap, String> {
    let mut tokens = text
        .lines()
        .map(|l| l.split('#').next().unwrap_or(""))
        .flat_map(str::split_whitespace);
    if tokens.next() != Some("P2") {
        return Err("expected plain PGM (P2)".into());
    }
    let mut number = |what: &str| -> Result<u32, String> {
        let t = tokens.next().ok_or_else(|| format!("missing {what}"))?;
        t.parse().map_err(|_| format!("bad {what} {t:?}"))
    };
    let width = number("width")? as usize;
    let height = number("height")? as usize;
    let maxval = number("maxval")?;
    let mut counts = Vec::with_capacity(width * height);
    for _ in 0..width * height {
        let v = number("sample")?;
        if v > maxval {
            return Err(format!("sample {v} exceeds maxval {maxval}"));
        }
        counts.push(v);
    }
    CountMap::new(height, width, counts).map_err(|e| e.to_string())
}

pub fn encode_f32i(img: &Image) -> Vec<u8> {
    let mut out = Vec::with_capacity(F32I_HEADER_LEN + 4 * img.data().len());
    out.extend_from_slice(F32I_MAGIC);
    out.extend_from_slice(&(img.height() as u32).to_le_bytes());
    out.extend_from_slice(&(img.width() as u32).to_le_bytes());
    out.extend_from_slice(&0u32.to_le_bytes());
    for &v in img.data() {
        out.extend_from_slice(&(v as f32).to_le_bytes());
    }
    out
}

pub fn decode_f32i(path: &Path, bytes: &[u8]) -> Result<Image, ImageIoError> {
    if bytes.len() < F32I_HEADER_LEN || &bytes[..4] != F32I_MAGIC {
        return Err(ImageIoError::BadMagic { path: path.to_path_buf() });
    }
    let word = |i: usize| u32::from_le_bytes(bytes[i..i + 4].try_into().unwrap()) as usize;
    let (h, w) = (word(4), word(8));
    let payload = &bytes[F32I_HEADER_LEN..];
    let expected = h * w * 4;
    if payload.len() != expected {
        return Err(ImageIoError::Truncated {
            path: path.to_path_buf(),
            expected,
            got: payload.len(),
        });
    }
    let data = payload
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes(c.try_into().unwrap()) as f64)
        .collect();
    Ok(Image::new(h, w, data)?)
}

pub fn write_f32i(path: &Path, img: &Image) -> Result<(), ImageIoError> {
    fs::write(path, encode_f32i(img)).map_err(io_err(path))
}

pub fn read_f32i(path: &Path) -> Result<Image, ImageIoError> {
    let bytes = fs::read(path).map_err(io_err(path))?;
    decode_f32i(path, &bytes)
}

fn extension(path: &Path) -> String {
    path.extension().and_then(|e| e.to_str()).unwrap_or("").to_ascii_lowercase()
}

/// Writes by extension: `.pgm`, `.png` (8-bit) or `.f32` (lossless).
pub fn save_image(path: &Path, img: &Image) -> Result<(), ImageIoError> {
    match extension(path).as_str() {
        "pgm" => write_pgm(path, img),
        "png" => write_png(path, img),
        "f32" => write_f32i(path, img),
        _ => Err(ImageIoError::Extension { path: path.to_path_buf() }),
    }
}

pub fn load_image(path: &Path) -> Result<Image, ImageIoError> {
    match extension(path).as_str() {
        "pgm" | "png" => read_gray(path),
        "f32" => read_f32i(path),
        _ => Err(ImageIoError::Extension { path: path.to_path_buf() }),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rounding_is_half_up() {
        assert_eq!(to_u8(0.0), 0);
        assert_eq!(to_u8(1.0), 255);
        assert_eq!(to_u8(0.5), 128);
        assert_eq!(to_u8(127.5 / 255.0), 128);
        assert_eq!(to_u8(-3.0), 0);
        assert_eq!(to_u8(7.0), 255);
    }

    #[test]
    fn pgm_png_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let img = Image::from_fn(5, 7, |r, c| ((r * 7 + c) * 7) as f64 / 255.0);
        for name in ["a.pgm", "a.png"] {
            let p = dir.path().join(name);
            save_image(&p, &img).unwrap();
            let back = load_image(&p).unwrap();
            assert_eq!(back.height(), 5);
            assert_eq!(back.width(), 7);
            for (a, b) in back.data().iter().zip(img.data()) {
                assert!((a - b).abs() < 1e-12);
            }
        }
        let bytes = fs::read(dir.path().join("a.pgm")).unwrap();
        assert!(bytes.starts_with(b"P5"));
    }

    #[test]
    fn frame_and_counts_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let frame = RawFrame::new(2, 3, vec![0, 1, 1, 0, 0, 1]).unwrap();
        let p = dir.path().join("f.pgm");
        write_frame_pgm(&p, &frame).unwrap();
        assert_eq!(read_frame(&p).unwrap(), frame);

        let counts = CountMap::new(2, 3, vec![0, 3, 17, 1, 250, 999]).unwrap();
        let p = dir.path().join("c.pgm");
        write_counts_pgm(&p, &counts).unwrap();
        assert!(fs::read(&p).unwrap().starts_with(b"P2"));
        assert_eq!(read_counts(&p).unwrap(), counts);
    }

    #[test]
    fn f32i_layout() {
        let img = Image::new(2, 3, vec![0.0, 0.25, 0.5, 0.75, 1.0, 0.125]).unwrap();
        let bytes = encode_f32i(&img);
        assert_eq!(bytes.len(), 16 + 6 * 4);
        assert_eq!(&bytes[..4], b"F32I");
        assert_eq!(&bytes[4..8], &2u32.to_le_bytes());
        assert_eq!(&bytes[8..12], &3u32.to_le_bytes());
        let back = decode_f32i(Path::new("x"), &bytes).unwrap();
        assert_eq!(back, img);
        assert!(matches!(
            decode_f32i(Path::new("x"), &bytes[..20]),
            Err(ImageIoError::Truncated { .. })
        ));
        let mut bad = bytes.clone();
        bad[0] = b'G';
        assert!(matches!(decode_f32i(Path::new("x"), &bad), Err(ImageIoError::BadMagic { .. })));
    }

    #[test]
    fn missing_file_names_path() {
        let err = read_gray(Path::new("/nonexistent/dir/x.pgm")).unwrap_err();
        assert!(matches!(err, ImageIoError::Io { .. }));
        assert!(err.to_string().contains("/nonexistent/dir/x.pgm"));
    }
}
