use std::path::PathBuf;
use std::time::Instant;

use clap::Args;
use log::info;
use photonlab::imageio;
use photonlab::tv::{reconstruct_tv, SolveTrace, TvConfig};
use photonlab::{CountMap, Image};
use rayon::prelude::*;
use serde::Serialize;

use crate::config::CONFIG_FILE;
use crate::error::{compute, input, CliError};
use crate::files::{create_dir, list_images, read_count_input, save_image, stem, write_json, write_text};

/// Reconstruct frames or count maps with the TV-regularised Poisson solver
#[derive(Args, Clone, Debug, Serialize)]
pub struct TvArgs {
    /// Binary frame / plain-PGM count map, or a directory of them
    #[arg(long)]
    pub input: PathBuf,
    /// Solver settings as JSON; flags below override it
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub tv_weight: Option<f64>,
    #[arg(long)]
    pub background: Option<f64>,
    #[arg(long)]
    pub max_iters: Option<usize>,
    #[arg(long)]
    pub inner_iters: Option<usize>,
    #[arg(long)]
    pub tolerance: Option<f64>,
    /// Also write lossless 32-bit float copies (.f32)
    #[arg(long)]
    pub raw: bool,
    #[arg(long)]
    pub out: PathBuf,
}

impl TvArgs {
    pub fn tv_config(&self) -> Result<TvConfig, CliError> {
        let mut cfg = match &self.config {
            Some(p) => {
                let text = std::fs::read_to_string(p).map_err(input(format!("reading {}", p.display())))?;
                serde_json::from_str(&text).map_err(input(format!("parsing {}", p.display())))?
            }
            None => TvConfig::default(),
        };
        if let Some(v) = self.tv_weight {
            cfg.tv_weight = v;
        }
        if let Some(v) = self.background {
            cfg.background = v;
        }
        if let Some(v) = self.max_iters {
            cfg.max_outer_iters = v;
        }
        if let Some(v) = self.inner_iters {
            cfg.inner_iters = v;
        }
        if let Some(v) = self.tolerance {
            cfg.tolerance = v;
        }
        cfg.validate().map_err(|e| CliError::Usage(e.to_string()))?;
        Ok(cfg)
    }
}

pub struct TvResult {
    pub image: Image,
    pub trace: SolveTrace,
    pub seconds: f64,
}

/// Solves every count map, in input order.
pub fn solve_all(inputs: &[CountMap], cfg: &TvConfig) -> Result<Vec<TvResult>, CliError> {
    inputs
        .par_iter()
        .enumerate()
        .map(|(i, y)| {
            let t = Instant::now();
            let (image, trace) = reconstruct_tv(y, cfg).map_err(compute(format!("TV solve of input {i}")))?;
            Ok(TvResult {
                image,
                trace,
                seconds: t.elapsed().as_secs_f64(),
            })
        })
        .collect()
}

#[derive(Serialize)]
struct ResolvedTv<'a> {
    input: &'a std::path::Path,
    tv: TvConfig,
    raw: bool,
    out: &'a std::path::Path,
}

pub fn cmd_tv(args: &TvArgs) -> Result<Vec<TvResult>, CliError> {
    let cfg = args.tv_config()?;
    let files = list_images(&args.input)?;
    let inputs = files.iter().map(|p| read_count_input(p)).collect::<Result<Vec<_>, _>>()?;
    let results = solve_all(&inputs, &cfg)?;
    create_dir(&args.out)?;
    for (path, r) in files.iter().zip(&results) {
        let name = stem(path);
        save_image(&args.out.join(format!("{name}.pgm")), &r.image)?;
        write_text(&args.out.join(format!("{name}_trace.csv")), &r.trace.to_csv())?;
        if args.raw {
            let p = args.out.join(format!("{name}.f32"));
            imageio::write_f32i(&p, &r.image).map_err(input(format!("writing {}", p.display())))?;
        }
        info!(
            "{name}: {} iterations, {:?}, {:.2} ms",
            r.trace.rows.len(),
            r.trace.stop,
            r.seconds * 1e3
        );
    }
    write_json(
        &args.out.join(CONFIG_FILE),
        &ResolvedTv {
            input: &args.input,
            tv: cfg,
            raw: args.raw,
            out: &args.out,
        },
    )?;
    Ok(results)
}
