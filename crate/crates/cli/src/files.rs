use std::fs;
use std::path::{Path, PathBuf};

use photonlab::imageio;
use photonlab::{CountMap, Image, RawFrame};
use serde::Serialize;

use crate::error::{input, CliError};

const IMAGE_EXTENSIONS: [&str; 3] = ["pgm", "png", "f32"];

pub fn create_dir(path: &Path) -> Result<(), CliError> {
    fs::create_dir_all(path).map_err(input(format!("creating {}", path.display())))
}

pub fn write_text(path: &Path, text: &str) -> Result<(), CliError> {
    fs::write(path, text).map_err(input(format!("writing {}", path.display())))
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<(), CliError> {
    write_text(path, &(serde_json::to_string_pretty(value).expect("value serializes") + "\n"))
}

/// `path` itself if it is a file, else the image files directly inside it, sorted by name.
pub fn list_images(path: &Path) -> Result<Vec<PathBuf>, CliError> {
    let meta = fs::metadata(path).map_err(input(format!("reading {}", path.display())))?;
    if meta.is_file() {
        return Ok(vec![path.to_path_buf()]);
    }
    let mut files = Vec::new();
    for entry in fs::read_dir(path).map_err(input(format!("listing {}", path.display())))? {
        let p = entry.map_err(input(format!("listing {}", path.display())))?.path();
        let ext = p.extension().and_then(|e| e.to_str()).unwrap_or("");
        if p.is_file() && IMAGE_EXTENSIONS.contains(&ext) {
            files.push(p);
        }
    }
    files.sort();
    if files.is_empty() {
        return Err(CliError::Usage(format!("no .pgm/.png/.f32 images in {}", path.display())));
    }
    Ok(files)
}

pub fn stem(path: &Path) -> String {
    path.file_stem().and_then(|s| s.to_str()).unwrap_or("image").to_string()
}

pub fn read_image(path: &Path) -> Result<Image, CliError> {
    imageio::load_image(path).map_err(input(format!("reading {}", path.display())))
}

pub fn read_frame(path: &Path) -> Result<RawFrame, CliError> {
    imageio::read_frame(path).map_err(input(format!("reading {}", path.display())))
}

/// Plain (P2) files are count maps; anything else is read as a binary frame.
pub fn read_count_input(path: &Path) -> Result<CountMap, CliError> {
    let head = fs::read(path).map_err(input(format!("reading {}", path.display())))?;
    if head.starts_with(b"P2") {
        return imageio::read_counts(path).map_err(input(format!("reading {}", path.display())));
    }
    let frame = read_frame(path)?;
    let counts = frame.bits().iter().map(|&b| b as u32).collect();
    CountMap::new(frame.height(), frame.width(), counts).map_err(input(format!("reading {}", path.display())))
}

pub fn save_image(path: &Path, img: &Image) -> Result<(), CliError> {
    imageio::save_image(path, img).map_err(input(format!("writing {}", path.display())))
}
