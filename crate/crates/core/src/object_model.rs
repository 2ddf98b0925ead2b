//! Object transmittance masks: loading, classification and histograms.

use std::fs;
use std::io::Write;
use std::path::Path;

use sha2::{Digest, Sha256};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum ObjectError {
    #[error("cannot read object {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("malformed object file: {0}")]
    Parse(String),
    #[error("object has no pixels")]
    Empty,
    #[error("transmittance {value} at unit {index} outside [0, 1]")]
    OutOfRange { index: usize, value: f64 },
    #[error("{width}x{height} does not match {n} units")]
    Dimension { width: usize, height: usize, n: usize },
    #[error("binarize threshold must lie in (0, 1), got {0}")]
    Threshold(f64),
}

/// Per-unit transmittance map `t_i ∈ [0, 1]`, row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct ObjectMask {
    width: usize,
    height: usize,
    units: Vec<f64>,
}

/// Partition of unit indices (0-based) by transmittance class.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct UnitClasses {
    pub zero_units: Vec<usize>,
    pub one_units: Vec<usize>,
    pub fractional_units: Vec<usize>,
    /// Number of unit-transmittance units; `None` for grayscale masks.
    pub m: Option<usize>,
}

impl UnitClasses {
    pub fn is_binary(&self) -> bool {
        self.fractional_units.is_empty()
    }
}

const LETTER_A: [&str; 10] = [
    "....##....",
    "...####...",
    "...#..#...",
    "..##..##..",
    "..#....#..",
    ".##....##.",
    ".########.",
    ".#......#.",
    "##......##",
    "#........#",
];

/// Open units of the unscaled built-in letter.
pub const LETTER_A_UNITS: usize = 34;

impl ObjectMask {
    pub fn new(width: usize, height: usize, units: Vec<f64>) -> Result<Self, ObjectError> {
        if units.is_empty() {
            return Err(ObjectError::Empty);
        }
        if width == 0 || height == 0 || width * height != units.len() {
            return Err(ObjectError::Dimension { width, height, n: units.len() });
        }
        if let Some((index, &value)) =
            units.iter().enumerate().find(|(_, t)| !(0.0..=1.0).contains(*t))
        {
            return Err(ObjectError::OutOfRange { index, value });
        }
        Ok(Self { width, height, units })
    }

    /// Binary mask from a row of unit values, one row high.
    pub fn from_units(units: Vec<f64>) -> Result<Self, ObjectError> {
        Self::new(units.len(), 1, units)
    }

    /// Built-in binary letter "A" with exactly `m` open units.
    ///
    /// The 10×10 glyph has [`LETTER_A_UNITS`] open pixels. For larger `m` every
    /// glyph pixel is blown up to a `k×k` block with the smallest `k` that
    /// fits. The first `m` glyph pixels in raster order are opened.
    pub fn letter_a(m: usize) -> Self {
        let mut k = 1;
        while LETTER_A_UNITS * k * k < m {
            k += 1;
        }
        let width = 10 * k;
        let mut units = vec![0.0; width * width];
        let mut opened = 0;
        'outer: for y in 0..width {
            for x in 0..width {
                if opened == m {
                    break 'outer;
                }
                if LETTER_A[y / k].as_bytes()[x / k] == b'#' {
                    units[y * width + x] = 1.0;
                    opened += 1;
                }
            }
        }
        Self { width, height: width, units }
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn len(&self) -> usize {
        self.units.len()
    }

    pub fn is_empty(&self) -> bool {
        self.units.is_empty()
    }

    pub fn units(&self) -> &[f64] {
        &self.units
    }

    /// `t ≤ tol` → zero, `t ≥ 1 − tol` → one, otherwise fractional.
    pub fn classify_units(&self, tol: f64) -> UnitClasses {
        let mut classes = UnitClasses {
            zero_units: Vec::new(),
            one_units: Vec::new(),
            fractional_units: Vec::new(),
            m: None,
        };
        for (i, &t) in self.units.iter().enumerate() {
            if t <= tol {
                classes.zero_units.push(i);
            } else if t >= 1.0 - tol {
                classes.one_units.push(i);
            } else {
                classes.fractional_units.push(i);
            }
        }
        if classes.fractional_units.is_empty() {
            classes.m = Some(classes.one_units.len());
        }
        classes
    }

    /// Distinct transmittance values (ascending) with multiplicities.
    pub fn histogram(&self) -> Vec<(f64, usize)> {
        let mut sorted = self.units.clone();
        sorted.sort_by(f64::total_cmp);
        let mut out: Vec<(f64, usize)> = Vec::new();
        for t in sorted {
            match out.last_mut() {
                Some((v, k)) if *v == t => *k += 1,
                _ => out.push((t, 1)),
            }
        }
        out
    }

    /// Hex SHA-256 of the dimensions and unit values.
    pub fn digest(&self) -> String {
        let mut h = Sha256::new();
        h.update((self.width as u64).to_le_bytes());
        h.update((self.height as u64).to_le_bytes());
        for t in &self.units {
            h.update(t.to_le_bytes());
        }
        hex::encode(h.finalize())
    }

    /// CSV with one row per image row, shortest round-trip decimal values.
    pub fn to_csv(&self) -> String {
        let mut out = String::new();
        for row in self.units.chunks(self.width) {
            let line: Vec<String> = row.iter().map(|t| format!("{t}")).collect();
            out.push_str(&line.join(","));
            out.push('\n');
        }
        out
    }

    pub fn write_csv(&self, path: &Path) -> Result<(), ObjectError> {
        let io = |source| ObjectError::Io { path: path.display().to_string(), source };
        let mut f = fs::File::create(path).map_err(io)?;
        f.write_all(self.to_csv().as_bytes()).map_err(io)
    }
}

fn parse_csv(text: &str) -> Result<(usize, usize, Vec<f64>), ObjectError> {
    let mut rows: Vec<Vec<f64>> = Vec::new();
    for row in text.split(['\n', ';']) {
        let row = row.trim();
        if row.is_empty() || row.starts_with('#') {
            continue;
        }
        let vals = row
            .split(',')
            .map(|v| {
                v.trim()
                    .parse::<f64>()
                    .map_err(|e| ObjectError::Parse(format!("CSV value {v:?}: {e}")))
            })
            .collect::<Result<Vec<_>, _>>()?;
        rows.push(vals);
    }
    let height = rows.len();
    if height == 0 {
        return Err(ObjectError::Empty);
    }
    let width = rows[0].len();
    if rows.iter().any(|r| r.len() != width) {
        return Err(ObjectError::Parse("CSV rows have unequal lengths".into()));
    }
    Ok((width, height, rows.concat()))
}

struct Tokens<'a> {
    data: &'a [u8],
    pos: usize,
}

impl<'a> Tokens<'a> {
    fn next_token(&mut self) -> Result<&'a str, ObjectError> {
        loop {
            while self.pos < self.data.len() && self.data[self.pos].is_ascii_whitespace() {
                self.pos += 1;
            }
            if self.pos < self.data.len() && self.data[self.pos] == b'#' {
                while self.pos < self.data.len() && self.data[self.pos] != b'\n' {
                    self.pos += 1;
                }
                continue;
            }
            break;
        }
        let start = self.pos;
        while self.pos < self.data.len() && !self.data[self.pos].is_ascii_whitespace() {
            self.pos += 1;
        }
        if start == self.pos {
            return Err(ObjectError::Parse("truncated graymap header".into()));
        }
        std::str::from_utf8(&self.data[start..self.pos])
            .map_err(|_| ObjectError::Parse("non-ASCII graymap header".into()))
    }

    fn next_uint(&mut self) -> Result<usize, ObjectError> {
        let tok = self.next_token()?;
        tok.parse().map_err(|_| ObjectError::Parse(format!("expected integer, got {tok:?}")))
    }
}

/// Decodes a P5 (binary, 8- or 16-bit big-endian) or P2 (ASCII) graymap into
/// raw samples and the format's maxval.
pub fn parse_graymap(data: &[u8]) -> Result<(usize, usize, u16, Vec<u16>), ObjectError> {
    let mut tok = Tokens { data, pos: 0 };
    let magic = tok.next_token()?;
    if magic != "P5" && magic != "P2" {
        return Err(ObjectError::Parse(format!("unsupported graymap magic {magic:?}")));
    }
    let width = tok.next_uint()?;
    let height = tok.next_uint()?;
    let maxval = tok.next_uint()?;
    if maxval == 0 || maxval > 65535 {
        return Err(ObjectError::Parse(format!("maxval {maxval} out of range")));
    }
    let n = width * height;
    if n == 0 {
        return Err(ObjectError::Empty);
    }
    let samples = if magic == "P5" {
        // single whitespace byte separates header and raster
        let start = tok.pos + 1;
        let bytes = if maxval < 256 { 1 } else { 2 };
        let raster = data
            .get(start..start + n * bytes)
            .ok_or_else(|| ObjectError::Parse("graymap raster truncated".into()))?;
        if bytes == 1 {
            raster.iter().map(|&b| b as u16).collect()
        } else {
            raster.chunks_exact(2).map(|c| u16::from_be_bytes([c[0], c[1]])).collect()
        }
    } else {
        (0..n)
            .map(|_| tok.next_uint().map(|v| v as u16))
            .collect::<Result<Vec<_>, _>>()?
    };
    if let Some(v) = samples.iter().find(|&&v| v as usize > maxval) {
        return Err(ObjectError::Parse(format!("sample {v} exceeds maxval {maxval}")));
    }
    Ok((width, height, maxval as u16, samples))
}

/// Loads a mask from a graymap (`.pgm`) or CSV file.
///
/// Graymap samples are divided by the format's maxval; CSV values are taken as
/// transmittances. With `binarize_threshold`, values `≥ threshold` become 1 and
/// the rest 0.
pub fn load_object(path: &Path, binarize_threshold: Option<f64>) -> Result<ObjectMask, ObjectError> {
    let data = fs::read(path).map_err(|source| ObjectError::Io { path: path.display().to_string(), source })?;
    let is_graymap = data.starts_with(b"P5") || data.starts_with(b"P2");
    let (width, height, units) = if is_graymap {
        let (w, h, maxval, samples) = parse_graymap(&data)?;
        let scale = 1.0 / maxval as f64;
        (w, h, samples.into_iter().map(|s| s as f64 * scale).collect())
    } else {
        let text = String::from_utf8(data).map_err(|_| ObjectError::Parse("CSV is not UTF-8".into()))?;
        parse_csv(&text)?
    };
    mask_from_values(width, height, units, binarize_threshold)
}

/// Parses CSV text directly; see [`load_object`].
pub fn load_object_csv(text: &str, binarize_threshold: Option<f64>) -> Result<ObjectMask, ObjectError> {
    let (w, h, units) = parse_csv(text)?;
    mask_from_values(w, h, units, binarize_threshold)
}

fn mask_from_values(
    width: usize,
    height: usize,
    mut units: Vec<f64>,
    binarize_threshold: Option<f64>,
) -> Result<ObjectMask, ObjectError> {
    if let Some(th) = binarize_threshold {
        if !(th > 0.0 && th < 1.0) {
            return Err(ObjectError::Threshold(th));
        }
        for t in units.iter_mut() {
            *t = if *t >= th { 1.0 } else { 0.0 };
        }
    }
    ObjectMask::new(width, height, units)
}
