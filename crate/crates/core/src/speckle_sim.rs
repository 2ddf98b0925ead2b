//! Ideal pseudo-thermal speckle: i.i.d. exponential intensities per unit and
//! the bucket signal `I_B = Σ t_i I_i` they produce through the object.
//!
//! Frame `j` is drawn from a ChaCha8 stream selected by `j` under the run seed,
//! so its content is a pure function of `(seed, j)` whatever the schedule.

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Read, Write};
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::numerics::CompensatedSum;
use crate::object_model::ObjectMask;

/// Frames per deterministic work unit; fixed so results never depend on the
/// number of workers.
pub const CHUNK_FRAMES: u64 = 2048;

#[derive(Debug, Error)]
pub enum SimError {
    #[error("reference has {got} intensities, mask has {expected} units")]
    LengthMismatch { expected: usize, got: usize },
    #[error("invalid speckle configuration: {0}")]
    InvalidConfig(String),
    #[error("sample dump I/O: {0}")]
    Io(#[from] std::io::Error),
    #[error("malformed sample dump: {0}")]
    Format(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SpeckleConfig {
    pub mean_intensity: f64,
    pub seed: u64,
    pub units: usize,
}

impl SpeckleConfig {
    pub fn new(mean_intensity: f64, seed: u64, units: usize) -> Result<Self, SimError> {
        if !(mean_intensity > 0.0 && mean_intensity.is_finite()) {
            return Err(SimError::InvalidConfig(format!("mean intensity must be > 0, got {mean_intensity}")));
        }
        if units == 0 {
            return Err(SimError::InvalidConfig("unit count must be >= 1".into()));
        }
        Ok(Self { mean_intensity, seed, units })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SpeckleFrame {
    pub index: u64,
    pub reference: Vec<f64>,
    pub bucket: f64,
}

fn frame_rng(seed: u64, frame_index: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(frame_index);
    rng
}

/// Fills `out` with the reference intensities of frame `frame_index`.
///
/// Inverse-CDF sampling `−I_0 ln U` with `U ∈ (0, 1]`; results below the
/// smallest positive normal double are clamped up to it.
pub fn generate_frame_into(config: &SpeckleConfig, frame_index: u64, out: &mut [f64]) {
    let mut rng = frame_rng(config.seed, frame_index);
    for slot in out.iter_mut() {
        let u = 1.0 - rng.gen::<f64>();
        let v = -config.mean_intensity * u.ln();
        *slot = if v < f64::MIN_POSITIVE { f64::MIN_POSITIVE } else { v };
    }
}

pub fn generate_frame(config: &SpeckleConfig, frame_index: u64) -> Vec<f64> {
    let mut out = vec![0.0; config.units];
    generate_frame_into(config, frame_index, &mut out);
    out
}

/// `Σ t_i I_i` with compensated summation.
pub fn bucket_signal(reference: &[f64], mask: &ObjectMask) -> Result<f64, SimError> {
    if reference.len() != mask.len() {
        return Err(SimError::LengthMismatch { expected: mask.len(), got: reference.len() });
    }
    Ok(weighted_sum(reference, mask.units()))
}

fn weighted_sum(reference: &[f64], units: &[f64]) -> f64 {
    let mut s = CompensatedSum::new();
    for (i, t) in reference.iter().zip(units) {
        if *t != 0.0 {
            s.add(t * i);
        }
    }
    s.value()
}

/// How bucket values are paired with reference frames.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub enum Pairing {
    /// Bucket and reference from the same realization.
    #[default]
    Matched,
    /// Null test: frame `j` carries the bucket of frame `(j + offset) mod N`,
    /// which destroys every bucket–reference correlation.
    Shifted { offset: u64 },
}

/// Lazily generated stream of `N` frames through a fixed object.
#[derive(Debug, Clone)]
pub struct SampleSet {
    config: SpeckleConfig,
    mask: ObjectMask,
    frames: u64,
    pairing: Pairing,
}

/// Forward simulation of `frames` realizations; frames are produced on demand.
pub fn run_simulation(config: SpeckleConfig, mask: ObjectMask, frames: u64) -> Result<SampleSet, SimError> {
    if frames == 0 {
        return Err(SimError::InvalidConfig("sample count must be >= 1".into()));
    }
    if config.units != mask.len() {
        return Err(SimError::LengthMismatch { expected: mask.len(), got: config.units });
    }
    if mask.units().iter().all(|&t| t == 0.0) {
        return Err(SimError::InvalidConfig("mask transmits no light; every bucket would be 0".into()));
    }
    Ok(SampleSet { config, mask, frames, pairing: Pairing::Matched })
}

impl SampleSet {
    pub fn with_pairing(mut self, pairing: Pairing) -> Self {
        self.pairing = pairing;
        self
    }

    pub fn len(&self) -> u64 {
        self.frames
    }

    pub fn is_empty(&self) -> bool {
        self.frames == 0
    }

    pub fn config(&self) -> &SpeckleConfig {
        &self.config
    }

    pub fn mask(&self) -> &ObjectMask {
        &self.mask
    }

    pub fn pairing(&self) -> Pairing {
        self.pairing
    }

    /// Regenerates frame `index` into `frame`, reusing its buffer.
    pub fn fill_frame(&self, index: u64, frame: &mut SpeckleFrame) {
        frame.index = index;
        frame.reference.resize(self.config.units, 0.0);
        match self.pairing {
            Pairing::Matched => {
                generate_frame_into(&self.config, index, &mut frame.reference);
                frame.bucket = weighted_sum(&frame.reference, self.mask.units());
            }
            Pairing::Shifted { offset } => {
                let other = (index + offset % self.frames) % self.frames;
                generate_frame_into(&self.config, other, &mut frame.reference);
                frame.bucket = weighted_sum(&frame.reference, self.mask.units());
                generate_frame_into(&self.config, index, &mut frame.reference);
            }
        }
    }

    pub fn frame(&self, index: u64) -> SpeckleFrame {
        let mut f = SpeckleFrame { index, reference: Vec::new(), bucket: 0.0 };
        self.fill_frame(index, &mut f);
        f
    }

    pub fn iter(&self) -> impl Iterator<Item = SpeckleFrame> + '_ {
        (0..self.frames).map(move |j| self.frame(j))
    }

    /// Folds every frame into per-chunk states and merges them in chunk order.
    ///
    /// Chunks of [`CHUNK_FRAMES`] frames are processed on `workers` threads,
    /// but the merge sequence is fixed, so the result is bitwise independent
    /// of `workers`.
    pub fn fold_chunks<A, E, I, F, M>(&self, workers: usize, init: I, fold: F, merge: M) -> Result<A, E>
    where
        A: Send,
        E: Send,
        I: Fn() -> A + Sync,
        F: Fn(&mut A, &SpeckleFrame) -> Result<(), E> + Sync,
        M: Fn(&mut A, A),
    {
        let chunks = self.frames.div_ceil(CHUNK_FRAMES);
        let run_chunk = |c: u64| -> Result<A, E> {
            let mut acc = init();
            let mut frame = SpeckleFrame { index: 0, reference: vec![0.0; self.config.units], bucket: 0.0 };
            let end = ((c + 1) * CHUNK_FRAMES).min(self.frames);
            for j in c * CHUNK_FRAMES..end {
                self.fill_frame(j, &mut frame);
                fold(&mut acc, &frame)?;
            }
            Ok(acc)
        };
        let mut total = init();
        if workers <= 1 {
            for c in 0..chunks {
                merge(&mut total, run_chunk(c)?);
            }
            return Ok(total);
        }
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(workers)
            .build()
            .expect("worker pool");
        let batch = (workers as u64) * 2;
        let mut start = 0;
        while start < chunks {
            let end = (start + batch).min(chunks);
            let parts: Vec<Result<A, E>> = pool.install(|| (start..end).into_par_iter().map(run_chunk).collect());
            for part in parts {
                merge(&mut total, part?);
            }
            start = end;
        }
        Ok(total)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DumpHeader {
    pub format: String,
    pub version: u32,
    pub n: usize,
    #[serde(rename = "N")]
    pub frames: u64,
    #[serde(rename = "I_0")]
    pub i0: f64,
    pub seed: u64,
}

const DUMP_FORMAT: &str = "ghostmoment-samples";

/// Writes a raw sample dump: one JSON header line, then per frame
/// `frame_index: u64`, `I_B: f64` and `n` reference `f64`s, all little-endian.
pub fn write_dump(samples: &SampleSet, path: &Path) -> Result<(), SimError> {
    let header = DumpHeader {
        format: DUMP_FORMAT.into(),
        version: 1,
        n: samples.config.units,
        frames: samples.frames,
        i0: samples.config.mean_intensity,
        seed: samples.config.seed,
    };
    let mut w = BufWriter::new(File::create(path)?);
    serde_json::to_writer(&mut w, &header).map_err(|e| SimError::Format(e.to_string()))?;
    w.write_all(b"\n")?;
    for frame in samples.iter() {
        w.write_all(&frame.index.to_le_bytes())?;
        w.write_all(&frame.bucket.to_le_bytes())?;
        for v in &frame.reference {
            w.write_all(&v.to_le_bytes())?;
        }
    }
    w.flush()?;
    Ok(())
}

pub fn read_dump(path: &Path) -> Result<(DumpHeader, Vec<SpeckleFrame>), SimError> {
    let mut r = BufReader::new(File::open(path)?);
    let mut line = String::new();
    r.read_line(&mut line)?;
    let header: DumpHeader = serde_json::from_str(line.trim_end()).map_err(|e| SimError::Format(e.to_string()))?;
    if header.format != DUMP_FORMAT || header.version != 1 {
        return Err(SimError::Format(format!("unsupported dump {} v{}", header.format, header.version)));
    }
    let mut frames = Vec::with_capacity(header.frames as usize);
    let mut buf8 = [0u8; 8];
    for _ in 0..header.frames {
        r.read_exact(&mut buf8)?;
        let index = u64::from_le_bytes(buf8);
        r.read_exact(&mut buf8)?;
        let bucket = f64::from_le_bytes(buf8);
        let mut reference = Vec::with_capacity(header.n);
        for _ in 0..header.n {
            r.read_exact(&mut buf8)?;
            reference.push(f64::from_le_bytes(buf8));
        }
        frames.push(SpeckleFrame { index, reference, bucket });
    }
    Ok((header, frames))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::analytic::gamma::ln_gamma;

    fn cfg(n: usize) -> SpeckleConfig {
        SpeckleConfig::new(1.0, 42, n).unwrap()
    }

    #[test]
    fn frames_are_reproducible() {
        let c = cfg(64);
        let a = generate_frame(&c, 17);
        let b = generate_frame(&c, 17);
        assert_eq!(a.iter().map(|v| v.to_bits()).collect::<Vec<_>>(), b.iter().map(|v| v.to_bits()).collect::<Vec<_>>());
        assert_ne!(a, generate_frame(&c, 18));
        assert!(a.iter().all(|&v| v > 0.0));
    }

    #[test]
    fn exponential_mean_and_half_moment() {
        // 10^6 draws spread over frames of 1000 units
        let c = cfg(1000);
        let mut sum = CompensatedSum::new();
        let mut half = CompensatedSum::new();
        let mut half_sq = CompensatedSum::new();
        for j in 0..1000 {
            for v in generate_frame(&c, j) {
                sum.add(v);
                half.add(v.sqrt());
                half_sq.add(v);
            }
        }
        let n = 1e6;
        assert!((sum.value() / n - 1.0).abs() < 4e-3);
        let g15 = ln_gamma(1.5).exp();
        let mean_half = half.value() / n;
        let se_half = ((half_sq.value() / n - mean_half * mean_half) / n).sqrt();
        assert!((mean_half - g15).abs() < 4.0 * se_half, "{mean_half} vs {g15}");
        assert!((g15 - 0.886_226_925_452_758).abs() < 1e-15);
    }

    #[test]
    fn bucket_examples() {
        let m = ObjectMask::from_units(vec![1.0, 0.0]).unwrap();
        assert_eq!(bucket_signal(&[3.0, 5.0], &m).unwrap(), 3.0);
        let z = ObjectMask::from_units(vec![0.0, 0.0]).unwrap();
        assert_eq!(bucket_signal(&[3.0, 5.0], &z).unwrap(), 0.0);
        let g = ObjectMask::from_units(vec![0.5, 0.25]).unwrap();
        assert_eq!(bucket_signal(&[2.0, 4.0], &g).unwrap(), 2.0);
        assert!(matches!(bucket_signal(&[1.0], &g), Err(SimError::LengthMismatch { .. })));
    }

    #[test]
    fn bucket_dominates_each_weighted_unit() {
        let mask = ObjectMask::from_units(vec![0.3, 1.0, 0.0, 0.8]).unwrap();
        let set = run_simulation(cfg(4), mask.clone(), 500).unwrap();
        for f in set.iter() {
            for (i, t) in f.reference.iter().zip(mask.units()) {
                assert!(f.bucket >= t * i);
            }
        }
    }

    #[test]
    fn single_frame_and_invalid_counts() {
        let mask = ObjectMask::letter_a(5);
        let set = run_simulation(cfg(mask.len()), mask.clone(), 1).unwrap();
        assert_eq!(set.iter().count(), 1);
        assert!(run_simulation(cfg(mask.len()), mask.clone(), 0).is_err());
        assert!(run_simulation(cfg(3), mask, 10).is_err());
        assert!(SpeckleConfig::new(0.0, 1, 3).is_err());
    }

    #[test]
    fn chunked_fold_is_independent_of_workers() {
        let mask = ObjectMask::letter_a(7);
        let set = run_simulation(cfg(mask.len()), mask, 3 * CHUNK_FRAMES + 11).unwrap();
        let run = |w| {
            set.fold_chunks::<_, (), _, _, _>(
                w,
                || (CompensatedSum::new(), Vec::new()),
                |acc, f| {
                    acc.0.add(f.bucket);
                    acc.1.push(f.index);
                    Ok(())
                },
                |a, b| {
                    a.0.merge(&b.0);
                    a.1.extend(b.1);
                },
            )
            .unwrap()
        };
        let one = run(1);
        let four = run(4);
        assert_eq!(one.0.value().to_bits(), four.0.value().to_bits());
        assert_eq!(one.1, (0..set.len()).collect::<Vec<_>>());
        assert_eq!(one.1, four.1);
    }

    #[test]
    fn shifted_pairing_takes_bucket_from_other_frame() {
        let mask = ObjectMask::letter_a(4);
        let set = run_simulation(cfg(mask.len()), mask, 10).unwrap();
        let shifted = set.clone().with_pairing(Pairing::Shifted { offset: 3 });
        let f = shifted.frame(8);
        assert_eq!(f.reference, set.frame(8).reference);
        assert_eq!(f.bucket, set.frame(1).bucket);
    }

    #[test]
    fn dump_round_trip() {
        let mask = ObjectMask::from_units(vec![1.0, 0.5, 0.0]).unwrap();
        let set = run_simulation(cfg(3), mask, 5).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("s.bin");
        write_dump(&set, &p).unwrap();
        let (h, frames) = read_dump(&p).unwrap();
        assert_eq!((h.n, h.frames, h.seed), (3, 5, 42));
        assert_eq!(frames, set.iter().collect::<Vec<_>>());
        let raw = std::fs::read(&p).unwrap();
        let nl = raw.iter().position(|&b| b == b'\n').unwrap();
        assert_eq!(raw.len() - nl - 1, 5 * (8 + 8 + 3 * 8));
    }
}
