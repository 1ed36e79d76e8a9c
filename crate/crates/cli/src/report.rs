use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use clap::Args;
use log::info;
use photonlab::metrics::{compare_methods, line_profile, profile_csv, ContrastMode, EvalReport};
use photonlab::Image;
use serde::Serialize;

use crate::config::CONFIG_FILE;
use crate::error::{compute, CliError};
use crate::files::{create_dir, list_images, read_image, stem, write_json, write_text};

pub const REPORT_JSON: &str = "report.json";
pub const REPORT_CSV: &str = "report.csv";

/// Score reconstruction directories against ground truth
#[derive(Args, Clone, Debug, Serialize)]
pub struct EvalArgs {
    /// Directory of ground-truth images
    #[arg(long)]
    pub truth: PathBuf,
    /// Reconstructions as NAME=DIR; repeat for each method
    #[arg(long = "method", value_name = "NAME=DIR", required = true)]
    pub methods: Vec<String>,
    #[arg(long, default_value = "literal")]
    pub contrast: ContrastMode,
    #[arg(long)]
    pub out: PathBuf,
}

fn parse_method(spec: &str) -> Result<(String, PathBuf), CliError> {
    match spec.split_once('=') {
        Some((name, dir)) if !name.is_empty() && !dir.is_empty() => Ok((name.to_string(), PathBuf::from(dir))),
        _ => Err(CliError::Usage(format!("--method expects NAME=DIR, got {spec:?}"))),
    }
}

/// One image per file stem; a lossless `.f32` copy wins over an 8-bit one.
fn images_by_stem(dir: &Path) -> Result<BTreeMap<String, Image>, CliError> {
    let mut chosen: BTreeMap<String, PathBuf> = BTreeMap::new();
    for p in list_images(dir)? {
        let lossless = p.extension().is_some_and(|e| e == "f32");
        let entry = chosen.entry(stem(&p)).or_insert_with(|| p.clone());
        if lossless {
            *entry = p;
        }
    }
    chosen.into_iter().map(|(k, p)| Ok((k, read_image(&p)?))).collect()
}

/// Loads every method directory, requiring an image for each truth stem.
pub fn load_aligned(truth: &Path, methods: &[(String, PathBuf)]) -> Result<(Vec<Image>, Vec<(String, Vec<Image>)>), CliError> {
    let truths = images_by_stem(truth)?;
    let mut loaded = Vec::with_capacity(methods.len());
    for (name, dir) in methods {
        let mut recons = images_by_stem(dir)?;
        let missing: Vec<&str> = truths.keys().filter(|k| !recons.contains_key(*k)).map(|k| k.as_str()).collect();
        if !missing.is_empty() {
            return Err(CliError::Usage(format!(
                "method {name} ({}) is missing {} of {} images: {}",
                dir.display(),
                missing.len(),
                truths.len(),
                missing.join(", ")
            )));
        }
        let images = truths.keys().map(|k| recons.remove(k).expect("checked")).collect();
        loaded.push((name.clone(), images));
    }
    Ok((truths.into_values().collect(), loaded))
}

pub fn write_report(out: &Path, report: &EvalReport) -> Result<(), CliError> {
    write_text(&out.join(REPORT_JSON), &report.to_json())?;
    write_text(&out.join(REPORT_CSV), &report.to_csv())
}

pub fn cmd_eval(args: &EvalArgs) -> Result<EvalReport, CliError> {
    let methods = args.methods.iter().map(|m| parse_method(m)).collect::<Result<Vec<_>, _>>()?;
    let (truths, loaded) = load_aligned(&args.truth, &methods)?;
    let report = compare_methods(&loaded, &truths, args.contrast).map_err(compute("scoring reconstructions"))?;
    create_dir(&args.out)?;
    write_report(&args.out, &report)?;
    write_json(&args.out.join(CONFIG_FILE), args)?;
    for m in &report.methods {
        info!(
            "{}: median contrast {:.4}, median mse {:.6}",
            m.name, m.aggregates.median_contrast, m.aggregates.median_mse
        );
    }
    Ok(report)
}

/// Write one row of each image as a column,value CSV
#[derive(Args, Clone, Debug, Serialize)]
pub struct ProfileArgs {
    /// Image file or directory of images
    #[arg(long)]
    pub input: PathBuf,
    #[arg(long, default_value_t = 14)]
    pub row: usize,
    #[arg(long)]
    pub out: PathBuf,
}

pub fn cmd_profile(args: &ProfileArgs) -> Result<Vec<Vec<f64>>, CliError> {
    let files = list_images(&args.input)?;
    create_dir(&args.out)?;
    let mut profiles = Vec::with_capacity(files.len());
    for path in &files {
        let img = read_image(path)?;
        let profile = line_profile(&img, args.row).map_err(|e| CliError::Usage(format!("{}: {e}", path.display())))?;
        write_text(
            &args.out.join(format!("{}_row{}.csv", stem(path), args.row)),
            &profile_csv(&profile),
        )?;
        profiles.push(profile);
    }
    write_json(&args.out.join(CONFIG_FILE), args)?;
    Ok(profiles)
}
