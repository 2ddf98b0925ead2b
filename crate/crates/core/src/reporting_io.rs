//! On-disk formats: 16-bit graymap images with JSON sidecars, sweep CSV and
//! canonical JSON run reports. Every writer is deterministic.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::analytic::AnalyticPrediction;
use crate::metrics::ImageMetrics;
use crate::moment_engine::GhostImage;
use crate::object_model::parse_graymap;

pub const FORMAT_VERSION: &str = "1";
pub const SWEEP_HEADER: &str = "m,mu,nu,V,Rp_over_sqrtN,moment_finite,variance_finite";

#[derive(Debug, Error)]
pub enum ReportError {
    #[error("I/O on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("malformed file: {0}")]
    Malformed(String),
    #[error("unsupported format version {0:?} (expected \"1\")")]
    Version(String),
    #[error("schema error: {0}")]
    Schema(String),
    #[error("image contains non-finite values")]
    NonFinite,
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> ReportError + '_ {
    move |source| ReportError::Io { path: path.display().to_string(), source }
}

/// Sidecar recording the value range a graymap was scaled from.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ImageSidecar {
    pub version: String,
    pub width: usize,
    pub height: usize,
    pub mu: f64,
    pub nu: f64,
    pub n_samples: u64,
    pub g_min: f64,
    pub g_max: f64,
}

pub fn sidecar_path(image_path: &Path) -> PathBuf {
    image_path.with_extension("json")
}

/// Min–max scaled 16-bit samples; a constant image maps to mid-scale 32768.
pub fn quantize(values: &[f64]) -> (Vec<u16>, f64, f64) {
    let lo = values.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let samples = values
        .iter()
        .map(|&v| {
            if hi > lo {
                ((v - lo) / (hi - lo) * 65535.0).round() as u16
            } else {
                32768
            }
        })
        .collect();
    (samples, lo, hi)
}

/// Writes the normalized image as a P5 graymap (maxval 65535) plus a JSON
/// sidecar next to it holding `(g_min, g_max)`.
pub fn write_ghost_image(image: &GhostImage, path: &Path) -> Result<(), ReportError> {
    if image.normalized.iter().any(|v| !v.is_finite()) {
        return Err(ReportError::NonFinite);
    }
    let (samples, g_min, g_max) = quantize(&image.normalized);
    let mut bytes = format!("P5\n{} {}\n65535\n", image.width, image.height).into_bytes();
    for s in samples {
        bytes.extend_from_slice(&s.to_be_bytes());
    }
    fs::write(path, &bytes).map_err(io_err(path))?;
    let sidecar = ImageSidecar {
        version: FORMAT_VERSION.into(),
        width: image.width,
        height: image.height,
        mu: image.order.mu(),
        nu: image.order.nu(),
        n_samples: image.n_samples,
        g_min,
        g_max,
    };
    let side = sidecar_path(path);
    fs::write(&side, canonical_json(&sidecar)?).map_err(io_err(&side))
}

/// Reads a graymap written by [`write_ghost_image`] and restores absolute values.
pub fn read_ghost_image(path: &Path) -> Result<(ImageSidecar, Vec<f64>), ReportError> {
    let data = fs::read(path).map_err(io_err(path))?;
    let (w, h, maxval, samples) = parse_graymap(&data).map_err(|e| ReportError::Malformed(e.to_string()))?;
    let side = sidecar_path(path);
    let text = fs::read_to_string(&side).map_err(io_err(&side))?;
    let sidecar: ImageSidecar = serde_json::from_str(&text).map_err(|e| ReportError::Schema(e.to_string()))?;
    if sidecar.version != FORMAT_VERSION {
        return Err(ReportError::Version(sidecar.version));
    }
    if (w, h) != (sidecar.width, sidecar.height) {
        return Err(ReportError::Malformed("sidecar dimensions disagree with image".into()));
    }
    let span = sidecar.g_max - sidecar.g_min;
    let values = samples
        .into_iter()
        .map(|s| if span > 0.0 { sidecar.g_min + span * s as f64 / maxval as f64 } else { sidecar.g_min })
        .collect();
    Ok((sidecar, values))
}

/// One grid point of a visibility / SNR sweep.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub m: u64,
    pub mu: f64,
    pub nu: f64,
    pub visibility: Option<f64>,
    pub rp_over_sqrt_n: Option<f64>,
    pub moment_finite: bool,
    pub variance_finite: bool,
}

/// `%.17g`-style decimal: 17 significant digits, trailing zeros dropped.
pub fn format_g17(x: f64) -> String {
    if x == 0.0 || !x.is_finite() {
        return if x == 0.0 { "0".into() } else { format!("{x}") };
    }
    let sci = format!("{x:.16e}");
    let (mantissa, exp) = sci.split_once('e').expect("scientific format");
    let exp: i32 = exp.parse().expect("exponent");
    if !(-4..17).contains(&exp) {
        let m = mantissa.trim_end_matches('0').trim_end_matches('.');
        return format!("{m}e{}{:02}", if exp < 0 { '-' } else { '+' }, exp.abs());
    }
    let decimals = (16 - exp).max(0) as usize;
    let fixed = format!("{x:.decimals$}");
    if fixed.contains('.') {
        fixed.trim_end_matches('0').trim_end_matches('.').to_string()
    } else {
        fixed
    }
}

pub fn sweep_csv(rows: &[SweepRow]) -> String {
    let mut out = String::from(SWEEP_HEADER);
    out.push('\n');
    let opt = |v: Option<f64>| v.map(format_g17).unwrap_or_default();
    for r in rows {
        out.push_str(&format!(
            "{},{},{},{},{},{},{}\n",
            r.m,
            format_g17(r.mu),
            format_g17(r.nu),
            opt(r.visibility),
            opt(r.rp_over_sqrt_n),
            r.moment_finite,
            r.variance_finite
        ));
    }
    out
}

pub fn write_sweep_csv(rows: &[SweepRow], path: &Path) -> Result<(), ReportError> {
    let mut f = fs::File::create(path).map_err(io_err(path))?;
    f.write_all(sweep_csv(rows).as_bytes()).map_err(io_err(path))
}

/// Echo of the run configuration.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConfigEcho {
    pub mask_digest: String,
    pub width: usize,
    pub height: usize,
    pub i0: f64,
    pub seed: u64,
    pub n_samples: u64,
    /// `(mu, nu)` pairs in run order.
    pub orders: Vec<(f64, f64)>,
    pub null_pairing: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OrderResult {
    pub mu: f64,
    pub nu: f64,
    pub image_file: String,
    /// Present when the mask has both signal and background pixels.
    pub empirical: Option<ImageMetrics>,
    /// Present for binary masks with at least two open units.
    pub analytic: Option<AnalyticPrediction>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunReport {
    pub version: String,
    pub config: ConfigEcho,
    pub results: Vec<OrderResult>,
}

/// Pretty JSON with keys sorted at every level, newline-terminated.
pub fn canonical_json<T: Serialize>(value: &T) -> Result<String, ReportError> {
    // serde_json::Value objects are BTreeMap-backed, so keys come out sorted
    let v = serde_json::to_value(value).map_err(|e| ReportError::Malformed(e.to_string()))?;
    let mut s = serde_json::to_string_pretty(&v).map_err(|e| ReportError::Malformed(e.to_string()))?;
    s.push('\n');
    Ok(s)
}

pub fn write_report(report: &RunReport, path: &Path) -> Result<(), ReportError> {
    fs::write(path, canonical_json(report)?).map_err(io_err(path))
}

pub fn parse_report(text: &str) -> Result<RunReport, ReportError> {
    let v: serde_json::Value = serde_json::from_str(text).map_err(|e| ReportError::Malformed(e.to_string()))?;
    let version = v
        .get("version")
        .ok_or_else(|| ReportError::Schema("missing field `version`".into()))?;
    match version.as_str() {
        Some(FORMAT_VERSION) => {}
        Some(other) => return Err(ReportError::Version(other.into())),
        None => return Err(ReportError::Version(version.to_string())),
    }
    serde_json::from_value(v).map_err(|e| ReportError::Schema(e.to_string()))
}

pub fn read_report(path: &Path) -> Result<RunReport, ReportError> {
    parse_report(&fs::read_to_string(path).map_err(io_err(path))?)
}
