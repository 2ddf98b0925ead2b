use serde::{Deserialize, Serialize};

/// Neumaier-compensated running sum.
///
/// Keeps a separate compensation term so that long streams of positive terms
/// (10^5..10^6 samples, 10^6 units per bucket) do not drift.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct CompensatedSum {
    sum: f64,
    comp: f64,
}

impl CompensatedSum {
    pub const fn new() -> Self {
        Self { sum: 0.0, comp: 0.0 }
    }

    #[inline]
    pub fn add(&mut self, x: f64) {
        let t = self.sum + x;
        if self.sum.abs() >= x.abs() {
            self.comp += (self.sum - t) + x;
        } else {
            self.comp += (x - t) + self.sum;
        }
        self.sum = t;
    }

    /// Folds another partial sum into this one.
    #[inline]
    pub fn merge(&mut self, other: &CompensatedSum) {
        self.add(other.sum);
        self.comp += other.comp;
    }

    #[inline]
    pub fn value(&self) -> f64 {
        self.sum + self.comp
    }
}

impl FromIterator<f64> for CompensatedSum {
    fn from_iter<I: IntoIterator<Item = f64>>(iter: I) -> Self {
        let mut s = CompensatedSum::new();
        for x in iter {
            s.add(x);
        }
        s
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn recovers_small_terms_lost_by_naive_sum() {
        let mut naive = 1.0e16;
        let mut s = CompensatedSum::new();
        s.add(1.0e16);
        for _ in 0..1000 {
            s.add(1.0);
            naive += 1.0;
        }
        assert_eq!(s.value(), 1.0e16 + 1000.0);
        assert_ne!(naive, 1.0e16 + 1000.0);
    }

    #[test]
    fn merge_matches_serial() {
        let xs: Vec<f64> = (1..=10_000).map(|k| 1.0 / k as f64).collect();
        let serial: CompensatedSum = xs.iter().copied().collect();
        let mut left: CompensatedSum = xs[..3333].iter().copied().collect();
        let right: CompensatedSum = xs[3333..].iter().copied().collect();
        left.merge(&right);
        assert!((left.value() - serial.value()).abs() <= 1e-15 * serial.value());
    }
}
