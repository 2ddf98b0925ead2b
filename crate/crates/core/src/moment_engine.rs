//! Streaming estimators of `⟨I_B^μ I_i^ν⟩` and the normalized ghost image
//! `⟨I_B^μ I_i^ν⟩ / (⟨I_B^μ⟩ ⟨I_i^ν⟩)`.
//!
//! Accumulators are single-writer. Parallel runs keep one replica per chunk of
//! frames and merge the replicas in chunk order.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::numerics::CompensatedSum;
use crate::speckle_sim::{SampleSet, SpeckleFrame};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum MomentError {
    #[error("mu = 0 gives an image with no object dependence")]
    ZeroMu,
    #[error("nu = {0} <= -1/2: the estimator variance diverges")]
    NuTooNegative(f64),
    #[error("nu = {0} <= 0 requires the explicit unsafe flag")]
    NonPositiveNu(f64),
    #[error("order ({mu}, {nu}) is not finite")]
    NonFiniteOrder { mu: f64, nu: f64 },
    #[error("frame has {got} units, accumulator has {expected}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("non-finite power at frame {frame} for order ({mu}, {nu}): rescale I_0 or reduce |mu|")]
    NonFinite { frame: u64, mu: f64, nu: f64 },
    #[error("need at least 2 frames, have {0}")]
    TooFewFrames(u64),
    #[error("zero reference moment at pixel {0}")]
    ZeroReference(usize),
    #[error("cannot merge accumulators with different orders or shapes")]
    Incompatible,
    #[error("no moment orders given")]
    NoOrders,
}

/// Fractional order pair `(μ, ν)` applied to bucket and reference.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MomentOrder {
    mu: f64,
    nu: f64,
}

impl MomentOrder {
    /// Orders with `μ ≠ 0` and `ν > 0`.
    pub fn new(mu: f64, nu: f64) -> Result<Self, MomentError> {
        Self::with_unsafe_nu(mu, nu, false)
    }

    /// Like [`MomentOrder::new`], but admits `ν ∈ (−1/2, 0]` when `allow_nonpositive_nu`.
    pub fn with_unsafe_nu(mu: f64, nu: f64, allow_nonpositive_nu: bool) -> Result<Self, MomentError> {
        if !(mu.is_finite() && nu.is_finite()) {
            return Err(MomentError::NonFiniteOrder { mu, nu });
        }
        if mu == 0.0 {
            return Err(MomentError::ZeroMu);
        }
        if nu <= -0.5 {
            return Err(MomentError::NuTooNegative(nu));
        }
        if nu <= 0.0 {
            if !allow_nonpositive_nu {
                return Err(MomentError::NonPositiveNu(nu));
            }
            log::warn!("nu = {nu} <= 0: reference powers are heavy-tailed");
        }
        Ok(Self { mu, nu })
    }

    pub fn mu(&self) -> f64 {
        self.mu
    }

    pub fn nu(&self) -> f64 {
        self.nu
    }
}

/// Logarithms of one frame, shared by every order of a multi-order pass.
#[derive(Debug, Clone, Default)]
pub struct FrameLogs {
    pub index: u64,
    pub ln_bucket: f64,
    pub ln_reference: Vec<f64>,
}

impl FrameLogs {
    pub fn fill(&mut self, frame: &SpeckleFrame) {
        self.index = frame.index;
        self.ln_bucket = frame.bucket.max(f64::MIN_POSITIVE).ln();
        self.ln_reference.clear();
        self.ln_reference.extend(frame.reference.iter().map(|&v| v.max(f64::MIN_POSITIVE).ln()));
    }

    pub fn of(frame: &SpeckleFrame) -> Self {
        let mut logs = Self::default();
        logs.fill(frame);
        logs
    }
}

/// Per-frame average of the joint product over a fixed pixel group, tracked so
/// that the standard error of a class mean accounts for the shared bucket.
#[derive(Debug, Clone, PartialEq)]
struct GroupTrack {
    pixels: Vec<usize>,
    sum: CompensatedSum,
    sum_sq: CompensatedSum,
}

/// Running sums for one order.
#[derive(Debug, Clone, PartialEq)]
pub struct MomentAccumulator {
    order: MomentOrder,
    width: usize,
    height: usize,
    n_seen: u64,
    joint: Vec<CompensatedSum>,
    joint2: Vec<CompensatedSum>,
    reference: Vec<CompensatedSum>,
    bucket: CompensatedSum,
    bucket2: CompensatedSum,
    groups: Vec<GroupTrack>,
    scratch: Vec<f64>,
}

impl MomentAccumulator {
    pub fn new(order: MomentOrder, width: usize, height: usize) -> Self {
        let n = width * height;
        Self {
            order,
            width,
            height,
            n_seen: 0,
            joint: vec![CompensatedSum::new(); n],
            joint2: vec![CompensatedSum::new(); n],
            reference: vec![CompensatedSum::new(); n],
            bucket: CompensatedSum::new(),
            bucket2: CompensatedSum::new(),
            groups: Vec::new(),
            scratch: vec![0.0; n],
        }
    }

    /// Additionally tracks the per-frame mean joint product of each pixel group.
    pub fn with_groups(mut self, groups: &[Vec<usize>]) -> Self {
        self.groups = groups
            .iter()
            .map(|g| GroupTrack { pixels: g.clone(), sum: CompensatedSum::new(), sum_sq: CompensatedSum::new() })
            .collect();
        self
    }

    pub fn order(&self) -> MomentOrder {
        self.order
    }

    pub fn n_seen(&self) -> u64 {
        self.n_seen
    }

    pub fn units(&self) -> usize {
        self.joint.len()
    }

    pub fn accumulate(&mut self, frame: &SpeckleFrame) -> Result<(), MomentError> {
        self.accumulate_logs(&FrameLogs::of(frame))
    }

    /// Adds one frame given its logarithms; powers are `exp(order · ln x)`.
    ///
    /// On error the accumulator is left unchanged.
    pub fn accumulate_logs(&mut self, logs: &FrameLogs) -> Result<(), MomentError> {
        if logs.ln_reference.len() != self.joint.len() {
            return Err(MomentError::DimensionMismatch { expected: self.joint.len(), got: logs.ln_reference.len() });
        }
        let MomentOrder { mu, nu } = self.order;
        let bpow = (mu * logs.ln_bucket).exp();
        let mut rmax = 0.0f64;
        for (r, &lr) in self.scratch.iter_mut().zip(&logs.ln_reference) {
            *r = (nu * lr).exp();
            rmax = rmax.max(*r);
        }
        let worst = bpow * rmax;
        if !(bpow * bpow).is_finite() || !(worst * worst).is_finite() || !rmax.is_finite() {
            return Err(MomentError::NonFinite { frame: logs.index, mu, nu });
        }
        self.bucket.add(bpow);
        self.bucket2.add(bpow * bpow);
        for i in 0..self.scratch.len() {
            let r = self.scratch[i];
            let j = bpow * r;
            self.reference[i].add(r);
            self.joint[i].add(j);
            self.joint2[i].add(j * j);
        }
        for g in &mut self.groups {
            let s: f64 = g.pixels.iter().map(|&i| self.scratch[i]).sum();
            let avg = bpow * s / g.pixels.len().max(1) as f64;
            g.sum.add(avg);
            g.sum_sq.add(avg * avg);
        }
        self.n_seen += 1;
        Ok(())
    }

    /// Folds `other` into `self`; `other` represents frames that follow.
    pub fn merge(&mut self, other: &MomentAccumulator) -> Result<(), MomentError> {
        let same_groups = self.groups.len() == other.groups.len()
            && self.groups.iter().zip(&other.groups).all(|(a, b)| a.pixels == b.pixels);
        if self.order != other.order || self.joint.len() != other.joint.len() || !same_groups {
            return Err(MomentError::Incompatible);
        }
        self.n_seen += other.n_seen;
        self.bucket.merge(&other.bucket);
        self.bucket2.merge(&other.bucket2);
        for i in 0..self.joint.len() {
            self.joint[i].merge(&other.joint[i]);
            self.joint2[i].merge(&other.joint2[i]);
            self.reference[i].merge(&other.reference[i]);
        }
        for (a, b) in self.groups.iter_mut().zip(&other.groups) {
            a.sum.merge(&b.sum);
            a.sum_sq.merge(&b.sum_sq);
        }
        Ok(())
    }

    pub fn joint_sum(&self, i: usize) -> f64 {
        self.joint[i].value()
    }

    pub fn joint2_sum(&self, i: usize) -> f64 {
        self.joint2[i].value()
    }

    pub fn reference_sum(&self, i: usize) -> f64 {
        self.reference[i].value()
    }

    pub fn bucket_sum(&self) -> f64 {
        self.bucket.value()
    }

    /// Mean and standard error of `⟨I_B^μ⟩`.
    pub fn bucket_moment(&self) -> (f64, f64) {
        mean_and_se(self.bucket.value(), self.bucket2.value(), self.n_seen)
    }

    /// Mean and standard error of the group-averaged joint product of group `g`.
    pub fn group_moment(&self, g: usize) -> Option<(f64, f64)> {
        self.groups.get(g).map(|t| mean_and_se(t.sum.value(), t.sum_sq.value(), self.n_seen))
    }

    pub fn finalize(&self) -> Result<GhostImage, MomentError> {
        if self.n_seen < 2 {
            return Err(MomentError::TooFewFrames(self.n_seen));
        }
        let n = self.n_seen as f64;
        let bucket_mean = self.bucket.value() / n;
        let units = self.joint.len();
        let mut image = GhostImage {
            width: self.width,
            height: self.height,
            order: self.order,
            n_samples: self.n_seen,
            bucket_mean,
            normalized: Vec::with_capacity(units),
            normalized_se: Vec::with_capacity(units),
            joint_mean: Vec::with_capacity(units),
            joint2_mean: Vec::with_capacity(units),
            joint_se: Vec::with_capacity(units),
            reference_mean: Vec::with_capacity(units),
        };
        for i in 0..units {
            let r = self.reference[i].value() / n;
            if r <= 0.0 {
                return Err(MomentError::ZeroReference(i));
            }
            let (j, se) = mean_and_se(self.joint[i].value(), self.joint2[i].value(), self.n_seen);
            let denom = bucket_mean * r;
            image.normalized.push(j / denom);
            image.normalized_se.push(se / denom);
            image.joint_mean.push(j);
            image.joint2_mean.push(self.joint2[i].value() / n);
            image.joint_se.push(se);
            image.reference_mean.push(r);
        }
        Ok(image)
    }
}

/// `(S/N, √((S2/N − (S/N)²)/N))`.
fn mean_and_se(sum: f64, sum_sq: f64, n: u64) -> (f64, f64) {
    let n = n as f64;
    let mean = sum / n;
    let var = (sum_sq / n - mean * mean).max(0.0);
    (mean, (var / n).sqrt())
}

/// Normalized fractional-order ghost image plus the raw moments behind it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GhostImage {
    pub width: usize,
    pub height: usize,
    pub order: MomentOrder,
    pub n_samples: u64,
    /// `⟨I_B^μ⟩`.
    pub bucket_mean: f64,
    /// `g_i = ⟨I_B^μ I_i^ν⟩ / (⟨I_B^μ⟩ ⟨I_i^ν⟩)`.
    pub normalized: Vec<f64>,
    /// Standard error of `g_i` from the joint-moment standard error.
    pub normalized_se: Vec<f64>,
    /// `⟨I_B^μ I_i^ν⟩`.
    pub joint_mean: Vec<f64>,
    /// `⟨I_B^{2μ} I_i^{2ν}⟩`.
    pub joint2_mean: Vec<f64>,
    pub joint_se: Vec<f64>,
    /// `⟨I_i^ν⟩`.
    pub reference_mean: Vec<f64>,
}

/// One streaming pass over `samples` producing an accumulator per order.
///
/// `groups` are pixel groups whose per-frame averages are tracked for class
/// standard errors (may be empty).
pub fn multi_order_accumulate(
    samples: &SampleSet,
    orders: &[MomentOrder],
    groups: &[Vec<usize>],
    workers: usize,
) -> Result<Vec<MomentAccumulator>, MomentError> {
    if orders.is_empty() {
        return Err(MomentError::NoOrders);
    }
    let mask = samples.mask();
    let (w, h) = (mask.width(), mask.height());
    let make = || {
        let accs: Vec<MomentAccumulator> =
            orders.iter().map(|&o| MomentAccumulator::new(o, w, h).with_groups(groups)).collect();
        (accs, FrameLogs::default())
    };
    let (accs, _) = samples.fold_chunks(
        workers,
        make,
        |(accs, logs), frame| {
            logs.fill(frame);
            accs.iter_mut().try_for_each(|a| a.accumulate_logs(logs))
        },
        |(total, _), (part, _)| {
            for (t, p) in total.iter_mut().zip(&part) {
                t.merge(p).expect("replicas share orders and shape");
            }
        },
    )?;
    Ok(accs)
}

/// Ghost images for every order, in input order, from a single pass.
pub fn multi_order_pass(
    samples: &SampleSet,
    orders: &[MomentOrder],
    workers: usize,
) -> Result<Vec<GhostImage>, MomentError> {
    multi_order_accumulate(samples, orders, &[], workers)?
        .iter()
        .map(MomentAccumulator::finalize)
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::object_model::ObjectMask;
    use crate::speckle_sim::{run_simulation, SpeckleConfig};
    use proptest::prelude::*;

    fn frame(bucket: f64, reference: Vec<f64>) -> SpeckleFrame {
        SpeckleFrame { index: 0, reference, bucket }
    }

    #[test]
    fn order_validation() {
        assert_eq!(MomentOrder::new(0.0, 0.5), Err(MomentError::ZeroMu));
        assert_eq!(MomentOrder::new(1.0, 0.0), Err(MomentError::NonPositiveNu(0.0)));
        assert!(MomentOrder::with_unsafe_nu(1.0, -0.3, true).is_ok());
        assert_eq!(MomentOrder::with_unsafe_nu(1.0, -0.5, true), Err(MomentError::NuTooNegative(-0.5)));
        assert!(MomentOrder::new(f64::NAN, 1.0).is_err());
    }

    #[test]
    fn single_frame_increments() {
        let mut acc = MomentAccumulator::new(MomentOrder::new(1.0, 1.0).unwrap(), 1, 1);
        acc.accumulate(&frame(2.0, vec![3.0])).unwrap();
        assert!((acc.joint_sum(0) - 6.0).abs() < 1e-14);
        assert!((acc.joint2_sum(0) - 36.0).abs() < 1e-13);

        let mut acc = MomentAccumulator::new(MomentOrder::new(-1.0, 1.0).unwrap(), 1, 1);
        acc.accumulate(&frame(2.0, vec![3.0])).unwrap();
        assert!((acc.joint_sum(0) - 1.5).abs() < 1e-15);

        let mut acc = MomentAccumulator::new(MomentOrder::new(0.618, 0.5).unwrap(), 1, 1);
        acc.accumulate(&frame(1.0, vec![1.0])).unwrap();
        assert_eq!(acc.joint_sum(0), 1.0);
        assert_eq!(acc.n_seen(), 1);
    }

    #[test]
    fn overflow_is_reported_and_leaves_state_untouched() {
        let mut acc = MomentAccumulator::new(MomentOrder::new(-200.0, 1.0).unwrap(), 1, 1);
        let err = acc.accumulate(&frame(1e-3, vec![1.0])).unwrap_err();
        assert!(matches!(err, MomentError::NonFinite { .. }));
        assert_eq!(acc.n_seen(), 0);
        assert_eq!(acc.joint_sum(0), 0.0);
    }

    #[test]
    fn finalize_requires_two_frames_and_matching_dims() {
        let mut acc = MomentAccumulator::new(MomentOrder::new(1.0, 1.0).unwrap(), 2, 1);
        assert!(matches!(acc.accumulate(&frame(1.0, vec![1.0])), Err(MomentError::DimensionMismatch { .. })));
        acc.accumulate(&frame(1.0, vec![1.0, 2.0])).unwrap();
        assert_eq!(acc.finalize(), Err(MomentError::TooFewFrames(1)));
    }

    #[test]
    fn zero_bucket_is_clamped() {
        let mut acc = MomentAccumulator::new(MomentOrder::new(0.5, 1.0).unwrap(), 1, 1);
        acc.accumulate(&frame(0.0, vec![1.0])).unwrap();
        assert!(acc.joint_sum(0).is_finite());
    }

    #[test]
    fn multi_order_matches_single_order_path() {
        let mask = ObjectMask::letter_a(6);
        let set = run_simulation(SpeckleConfig::new(1.0, 5, mask.len()).unwrap(), mask.clone(), 3000).unwrap();
        let orders = [MomentOrder::new(-1.414, 0.5).unwrap(), MomentOrder::new(2.0, 1.0).unwrap()];
        let images = multi_order_pass(&set, &orders, 3).unwrap();
        assert_eq!(images.len(), 2);
        for (img, &o) in images.iter().zip(&orders) {
            let mut acc = MomentAccumulator::new(o, mask.width(), mask.height());
            for f in set.iter() {
                acc.accumulate(&f).unwrap();
            }
            let single = acc.finalize().unwrap();
            assert_eq!(img.order, o);
            for i in 0..mask.len() {
                assert!(((img.joint_mean[i] - single.joint_mean[i]) / single.joint_mean[i]).abs() < 1e-12);
            }
        }
        assert_eq!(multi_order_pass(&set, &[], 1).unwrap_err(), MomentError::NoOrders);
    }

    #[test]
    fn group_tracks_average_of_pixel_sums() {
        let mut acc = MomentAccumulator::new(MomentOrder::new(1.0, 1.0).unwrap(), 3, 1).with_groups(&[vec![0, 2]]);
        acc.accumulate(&frame(2.0, vec![1.0, 5.0, 3.0])).unwrap();
        acc.accumulate(&frame(1.0, vec![2.0, 5.0, 4.0])).unwrap();
        let (mean, _) = acc.group_moment(0).unwrap();
        let want = ((acc.joint_sum(0) + acc.joint_sum(2)) / 2.0) / 2.0;
        assert!((mean - want).abs() < 1e-14);
    }

    proptest! {
        #[test]
        fn merge_of_contiguous_parts_equals_serial(cuts in proptest::collection::btree_set(1u64..399, 0..5)) {
            let mask = ObjectMask::from_units(vec![1.0, 0.0, 1.0, 0.4]).unwrap();
            let set = run_simulation(SpeckleConfig::new(1.0, 11, 4).unwrap(), mask, 400).unwrap();
            let order = MomentOrder::new(-0.618, 0.5).unwrap();
            let mut serial = MomentAccumulator::new(order, 4, 1).with_groups(&[vec![0, 2]]);
            for f in set.iter() {
                serial.accumulate(&f).unwrap();
            }
            let mut bounds: Vec<u64> = vec![0];
            bounds.extend(cuts.iter().copied());
            bounds.push(400);
            let mut merged = MomentAccumulator::new(order, 4, 1).with_groups(&[vec![0, 2]]);
            for w in bounds.windows(2) {
                let mut part = MomentAccumulator::new(order, 4, 1).with_groups(&[vec![0, 2]]);
                for j in w[0]..w[1] {
                    part.accumulate(&set.frame(j)).unwrap();
                }
                merged.merge(&part).unwrap();
            }
            prop_assert_eq!(merged.n_seen(), serial.n_seen());
            for i in 0..4 {
                for (a, b) in [(merged.joint_sum(i), serial.joint_sum(i)), (merged.joint2_sum(i), serial.joint2_sum(i)), (merged.reference_sum(i), serial.reference_sum(i))] {
                    prop_assert!(((a - b) / b).abs() < 1e-12);
                }
            }
            let (a, _) = merged.group_moment(0).unwrap();
            let (b, _) = serial.group_moment(0).unwrap();
            prop_assert!(((a - b) / b).abs() < 1e-12);
        }
    }
}
