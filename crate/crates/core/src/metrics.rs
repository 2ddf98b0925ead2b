//! Empirical visibility and peak SNR of reconstructed images against the
//! ground-truth unit classes.
//!
//! Only exact-0 and exact-1 units enter the class means; fractional units are
//! excluded and counted.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::moment_engine::{GhostImage, MomentAccumulator, MomentError};
use crate::object_model::UnitClasses;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum MetricsError {
    #[error("the {0} class has no pixels")]
    EmptyClass(&'static str),
    #[error("pooled variance estimate {0:e} is not positive; more samples needed")]
    NonPositiveVariance(f64),
    #[error(transparent)]
    Moment(#[from] MomentError),
}

/// Group layout expected by [`image_metrics`]: signal pixels then background pixels.
pub fn class_groups(classes: &UnitClasses) -> Vec<Vec<usize>> {
    vec![classes.one_units.clone(), classes.zero_units.clone()]
}

fn class_mean(values: &[f64], pixels: &[usize]) -> f64 {
    pixels.iter().map(|&i| values[i]).sum::<f64>() / pixels.len() as f64
}

/// `|⟨⟩_1 − ⟨⟩_0| / (⟨⟩_1 + ⟨⟩_0)` from class means of the raw joint moment.
pub fn empirical_visibility(image: &GhostImage, classes: &UnitClasses) -> Result<f64, MetricsError> {
    if classes.one_units.is_empty() {
        return Err(MetricsError::EmptyClass("signal"));
    }
    if classes.zero_units.is_empty() {
        return Err(MetricsError::EmptyClass("background"));
    }
    let s = class_mean(&image.joint_mean, &classes.one_units);
    let b = class_mean(&image.joint_mean, &classes.zero_units);
    Ok(visibility_of(s, b))
}

fn visibility_of(s: f64, b: f64) -> f64 {
    if s + b == 0.0 {
        0.0
    } else {
        (s - b).abs() / (s + b)
    }
}

struct Pooled {
    n: f64,
    signal: f64,
    background: f64,
    signal2: f64,
}

fn pooled(acc: &MomentAccumulator, classes: &UnitClasses) -> Result<Pooled, MetricsError> {
    if classes.one_units.is_empty() {
        return Err(MetricsError::EmptyClass("signal"));
    }
    if acc.n_seen() < 2 {
        return Err(MomentError::TooFewFrames(acc.n_seen()).into());
    }
    let n = acc.n_seen() as f64;
    let mean_over = |f: &dyn Fn(usize) -> f64, px: &[usize]| px.iter().map(|&i| f(i)).sum::<f64>() / px.len() as f64 / n;
    let signal = mean_over(&|i| acc.joint_sum(i), &classes.one_units);
    let signal2 = mean_over(&|i| acc.joint2_sum(i), &classes.one_units);
    let background = if classes.zero_units.is_empty() {
        // ⟨⟩_0 factorizes as ⟨I_B^μ⟩⟨I_i^ν⟩
        acc.bucket_sum() / n * mean_over(&|i| acc.reference_sum(i), &classes.one_units)
    } else {
        mean_over(&|i| acc.joint_sum(i), &classes.zero_units)
    };
    Ok(Pooled { n, signal, background, signal2 })
}

/// `√N |⟨⟩_1 − ⟨⟩_0| / √|⟨I_B^{2μ} I_i^{2ν}⟩_1 − ⟨⟩_1²|` with moments pooled
/// over the signal class.
///
/// Without background pixels, `⟨⟩_0` is estimated as `⟨I_B^μ⟩⟨I_i^ν⟩`.
pub fn empirical_peak_snr(acc: &MomentAccumulator, classes: &UnitClasses) -> Result<f64, MetricsError> {
    let p = pooled(acc, classes)?;
    let var = (p.signal2 - p.signal * p.signal).abs();
    if var.is_nan() || var <= 0.0 {
        return Err(MetricsError::NonPositiveVariance(var));
    }
    Ok(p.n.sqrt() * (p.signal - p.background).abs() / var.sqrt())
}

/// Class means, visibility and peak SNR with standard errors.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ImageMetrics {
    pub n_samples: u64,
    pub signal_mean: f64,
    pub signal_se: f64,
    pub background_mean: f64,
    pub background_se: f64,
    /// Mean of `g − 1` over signal pixels.
    pub contrast: f64,
    pub contrast_se: f64,
    pub visibility: f64,
    pub visibility_se: f64,
    pub peak_snr: f64,
    pub peak_snr_se: f64,
    pub excluded_fractional: usize,
}

/// Full metric set for a binary (or thresholded-class) reconstruction.
///
/// Class standard errors come from the accumulator's tracked groups when it
/// was built with [`class_groups`]; otherwise from the mean per-pixel error,
/// which ignores the shared-bucket correlation between pixels.
pub fn image_metrics(acc: &MomentAccumulator, classes: &UnitClasses) -> Result<ImageMetrics, MetricsError> {
    if classes.zero_units.is_empty() {
        return Err(MetricsError::EmptyClass("background"));
    }
    let image = acc.finalize()?;
    let p = pooled(acc, classes)?;
    let per_pixel_se = |px: &[usize]| class_mean(&image.joint_se, px);
    let (signal_se, background_se) = match (acc.group_moment(0), acc.group_moment(1)) {
        (Some((_, s)), Some((_, b))) => (s, b),
        _ => (per_pixel_se(&classes.one_units), per_pixel_se(&classes.zero_units)),
    };
    let (s, b) = (p.signal, p.background);
    let visibility = visibility_of(s, b);
    let visibility_se = 2.0 * (b * b * signal_se * signal_se + s * s * background_se * background_se).sqrt()
        / ((s + b) * (s + b));
    let sd1 = (p.signal2 - s * s).abs().sqrt();
    let peak_snr = if sd1 > 0.0 { p.n.sqrt() * (s - b).abs() / sd1 } else { 0.0 };
    let peak_snr_se = if sd1 > 0.0 {
        p.n.sqrt() * (signal_se * signal_se + background_se * background_se).sqrt() / sd1
    } else {
        f64::INFINITY
    };
    let ref_signal = class_mean(&image.reference_mean, &classes.one_units);
    let contrast = class_mean(&image.normalized, &classes.one_units) - 1.0;
    let contrast_se = signal_se / (image.bucket_mean * ref_signal);
    Ok(ImageMetrics {
        n_samples: acc.n_seen(),
        signal_mean: s,
        signal_se,
        background_mean: b,
        background_se,
        contrast,
        contrast_se,
        visibility,
        visibility_se,
        peak_snr,
        peak_snr_se,
        excluded_fractional: classes.fractional_units.len(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::moment_engine::MomentOrder;
    use crate::object_model::ObjectMask;
    use crate::speckle_sim::SpeckleFrame;

    fn image_with(joint: Vec<f64>) -> GhostImage {
        let n = joint.len();
        GhostImage {
            width: n,
            height: 1,
            order: MomentOrder::new(1.0, 1.0).unwrap(),
            n_samples: 10,
            bucket_mean: 1.0,
            normalized: joint.clone(),
            normalized_se: vec![0.0; n],
            joint2_mean: joint.iter().map(|j| j * j).collect(),
            joint_se: vec![0.0; n],
            reference_mean: vec![1.0; n],
            joint_mean: joint,
        }
    }

    #[test]
    fn visibility_examples() {
        let classes = ObjectMask::from_units(vec![1.0, 0.0, 1.0, 0.0]).unwrap().classify_units(0.0);
        assert_eq!(empirical_visibility(&image_with(vec![2.0; 4]), &classes).unwrap(), 0.0);
        let v = empirical_visibility(&image_with(vec![3.0, 1.0, 3.0, 1.0]), &classes).unwrap();
        assert!((v - 0.5).abs() < 1e-15);
    }

    #[test]
    fn empty_classes_are_errors() {
        let all_open = ObjectMask::from_units(vec![1.0, 1.0]).unwrap().classify_units(0.0);
        assert_eq!(
            empirical_visibility(&image_with(vec![1.0, 1.0]), &all_open),
            Err(MetricsError::EmptyClass("background"))
        );
        let closed = ObjectMask::from_units(vec![0.0, 0.0]).unwrap().classify_units(0.0);
        let acc = MomentAccumulator::new(MomentOrder::new(1.0, 1.0).unwrap(), 2, 1);
        assert_eq!(empirical_peak_snr(&acc, &closed), Err(MetricsError::EmptyClass("signal")));
    }

    #[test]
    fn peak_snr_follows_printed_formula() {
        let mask = ObjectMask::from_units(vec![1.0, 0.0]).unwrap();
        let classes = mask.classify_units(0.0);
        let mut acc = MomentAccumulator::new(MomentOrder::new(1.0, 1.0).unwrap(), 2, 1);
        let frames = [(3.0, [2.0, 1.0]), (1.0, [1.0, 4.0]), (5.0, [4.0, 2.0])];
        for (b, r) in frames {
            acc.accumulate(&SpeckleFrame { index: 0, reference: r.to_vec(), bucket: b }).unwrap();
        }
        let s: Vec<f64> = frames.iter().map(|(b, r)| b * r[0]).collect();
        let bg: Vec<f64> = frames.iter().map(|(b, r)| b * r[1]).collect();
        let m1 = s.iter().sum::<f64>() / 3.0;
        let m0 = bg.iter().sum::<f64>() / 3.0;
        let m2 = s.iter().map(|x| x * x).sum::<f64>() / 3.0;
        let want = 3f64.sqrt() * (m1 - m0).abs() / (m2 - m1 * m1).abs().sqrt();
        let got = empirical_peak_snr(&acc, &classes).unwrap();
        assert!((got - want).abs() < 1e-12 * want);
    }

    #[test]
    fn grey_units_are_excluded_and_counted() {
        let mask = ObjectMask::from_units(vec![1.0, 0.5, 0.0]).unwrap();
        let classes = mask.classify_units(0.0);
        let mut acc = MomentAccumulator::new(MomentOrder::new(1.0, 1.0).unwrap(), 3, 1);
        for k in 0..5 {
            let r = vec![1.0 + k as f64, 2.0, 0.5 + 0.3 * k as f64];
            let b = r[0] + 0.5 * r[1];
            acc.accumulate(&SpeckleFrame { index: k, reference: r, bucket: b }).unwrap();
        }
        let m = image_metrics(&acc, &classes).unwrap();
        assert_eq!(m.excluded_fractional, 1);
        assert!(m.visibility.is_finite() && m.peak_snr.is_finite());
    }
}
