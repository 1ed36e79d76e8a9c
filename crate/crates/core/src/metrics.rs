//! Contrast, MSE, line profiles and per-method evaluation reports.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::image::Image;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum MetricsError {
    #[error("contrast is undefined for an all-zero image")]
    ZeroImage,
    #[error("contrast needs nonnegative pixels, found {0}")]
    Negative(f64),
    #[error("image is {a:?} but reference is {b:?}")]
    SizeMismatch { a: (usize, usize), b: (usize, usize) },
    #[error("row {row} out of range for height {height}")]
    RowOutOfRange { row: usize, height: usize },
    #[error("method {method} has {got} images but there are {expected} truths")]
    LengthMismatch { method: String, got: usize, expected: usize },
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ContrastMode {
    /// Global maximum and minimum pixel.
    #[default]
    Literal,
    /// 99th and 1st percentiles.
    Robust,
}

impl std::str::FromStr for ContrastMode {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "literal" => Ok(Self::Literal),
            "robust" => Ok(Self::Robust),
            _ => Err(format!("unknown contrast mode {s:?} (literal, robust)")),
        }
    }
}

/// Linear-interpolated percentile of `sorted` (ascending), `q` in [0, 100].
pub fn percentile(sorted: &[f64], q: f64) -> f64 {
    let pos = q / 100.0 * (sorted.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    sorted[lo] + (sorted[hi] - sorted[lo]) * (pos - lo as f64)
}

pub fn median(values: &[f64]) -> f64 {
    if values.is_empty() {
        return f64::NAN;
    }
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    percentile(&v, 50.0)
}

pub fn mean(values: &[f64]) -> f64 {
    values.iter().sum::<f64>() / values.len() as f64
}

/// Population standard deviation.
pub fn std_dev(values: &[f64]) -> f64 {
    let m = mean(values);
    (values.iter().map(|v| (v - m).powi(2)).sum::<f64>() / values.len() as f64).sqrt()
}

/// `(I_max - I_min) / (I_max + I_min)`.
pub fn contrast(img: &Image, mode: ContrastMode) -> Result<f64, MetricsError> {
    if let Some(&v) = img.data().iter().find(|v| !(**v >= 0.0)) {
        return Err(MetricsError::Negative(v));
    }
    let (hi, lo) = match mode {
        ContrastMode::Literal => (img.max(), img.min()),
        ContrastMode::Robust => {
            let mut v = img.data().to_vec();
            v.sort_by(f64::total_cmp);
            (percentile(&v, 99.0), percentile(&v, 1.0))
        }
    };
    if hi + lo == 0.0 {
        return Err(MetricsError::ZeroImage);
    }
    Ok((hi - lo) / (hi + lo))
}

pub fn mse(img: &Image, truth: &Image) -> Result<f64, MetricsError> {
    if !img.same_size(truth) {
        return Err(MetricsError::SizeMismatch {
            a: (img.height(), img.width()),
            b: (truth.height(), truth.width()),
        });
    }
    let n = img.data().len() as f64;
    Ok(img.data().iter().zip(truth.data()).map(|(a, b)| (a - b).powi(2)).sum::<f64>() / n)
}

pub fn line_profile(img: &Image, row: usize) -> Result<Vec<f64>, MetricsError> {
    if row >= img.height() {
        return Err(MetricsError::RowOutOfRange {
            row,
            height: img.height(),
        });
    }
    Ok(img.row(row).to_vec())
}

/// `column,value` rows.
pub fn profile_csv(profile: &[f64]) -> String {
    let mut s = String::from("column,value\n");
    for (c, v) in profile.iter().enumerate() {
        s.push_str(&format!("{c},{v:.9}\n"));
    }
    s
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ImageScore {
    pub index: usize,
    pub contrast: f64,
    pub mse: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Aggregates {
    pub mean_contrast: f64,
    pub median_contrast: f64,
    pub std_contrast: f64,
    pub mean_mse: f64,
    pub median_mse: f64,
    pub std_mse: f64,
}

impl Aggregates {
    pub fn from_rows(rows: &[ImageScore]) -> Self {
        let c: Vec<f64> = rows.iter().map(|r| r.contrast).collect();
        let m: Vec<f64> = rows.iter().map(|r| r.mse).collect();
        Self {
            mean_contrast: mean(&c),
            median_contrast: median(&c),
            std_contrast: std_dev(&c),
            mean_mse: mean(&m),
            median_mse: median(&m),
            std_mse: std_dev(&m),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MethodReport {
    pub name: String,
    pub per_image: Vec<ImageScore>,
    pub aggregates: Aggregates,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub contrast_mode: ContrastMode,
    pub methods: Vec<MethodReport>,
}

impl EvalReport {
    pub fn method(&self, name: &str) -> Option<&MethodReport> {
        self.methods.iter().find(|m| m.name == name)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes") + "\n"
    }

    /// `method,index,contrast,mse` rows in report order.
    pub fn to_csv(&self) -> String {
        let mut s = String::from("method,index,contrast,mse\n");
        for m in &self.methods {
            for r in &m.per_image {
                s.push_str(&format!("{},{},{:.9},{:.9e}\n", m.name, r.index, r.contrast, r.mse));
            }
        }
        s
    }
}

/// Scores each method's reconstructions against `truths`, index by index.
pub fn compare_methods(
    methods: &[(String, Vec<Image>)],
    truths: &[Image],
    mode: ContrastMode,
) -> Result<EvalReport, MetricsError> {
    let mut reports = Vec::with_capacity(methods.len());
    for (name, recons) in methods {
        if recons.len() != truths.len() {
            return Err(MetricsError::LengthMismatch {
                method: name.clone(),
                got: recons.len(),
                expected: truths.len(),
            });
        }
        let per_image = recons
            .iter()
            .zip(truths)
            .enumerate()
            .map(|(index, (r, t))| {
                Ok(ImageScore {
                    index,
                    contrast: contrast(r, mode)?,
                    mse: mse(r, t)?,
                })
            })
            .collect::<Result<Vec<_>, MetricsError>>()?;
        reports.push(MethodReport {
            name: name.clone(),
            aggregates: Aggregates::from_rows(&per_image),
            per_image,
        });
    }
    Ok(EvalReport {
        contrast_mode: mode,
        methods: reports,
    })
}
