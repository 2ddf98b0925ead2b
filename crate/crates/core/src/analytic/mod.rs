//! Closed-form and semi-analytic theory of fractional-order ghost imaging.
//!
//! All Gamma-function ratios are formed in log space and exponentiated once.

pub mod binary;
pub mod gamma;
pub mod general;
pub mod pdf;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::object_model::ObjectMask;

pub use binary::{
    bucket_pdf_binary, joint_pdf_binary, moment_background, moment_signal, peak_snr, predict,
    visibility, PeakSnr,
};
pub use gamma::{ln_gamma, log_gamma};
pub use general::moment_general;
pub use pdf::{bucket_pdf_general, BucketPdfModel};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum AnalyticError {
    #[error("log-gamma is defined for x > 0, got {0}")]
    GammaDomain(f64),
    #[error("divergent moment: {}", .reasons.join(", "))]
    Domain { reasons: Vec<String> },
    #[error("binary formula needs m >= {needed}, got m = {m}")]
    TooFewUnits { needed: u64, m: u64 },
    #[error("mask has no nonzero transmittance unit")]
    EmptyMask,
    #[error("pixel index {index} out of range for {n} units")]
    PixelOutOfRange { index: usize, n: usize },
    #[error("intensities must be nonnegative")]
    NegativeIntensity,
    #[error("pole expansion is ill-conditioned ({0})")]
    IllConditioned(String),
    #[error("quadrature did not converge after {nodes} nodes (last relative change {change:e})")]
    NoConvergence { nodes: usize, change: f64 },
}

const MOMENT_REASONS: [&str; 3] = ["m+mu+nu <= 0", "m+mu <= 0", "1+nu <= 0"];

/// Existence flags of a fractional moment and of its estimator variance.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Validity {
    pub moment_finite: bool,
    pub variance_finite: bool,
    /// Every violated inequality, e.g. `"m+mu+nu <= 0"`.
    pub reasons: Vec<String>,
}

impl Validity {
    pub fn moment_error(&self) -> Option<AnalyticError> {
        (!self.moment_finite).then(|| AnalyticError::Domain {
            reasons: self
                .reasons
                .iter()
                .filter(|r| MOMENT_REASONS.contains(&r.as_str()))
                .cloned()
                .collect(),
        })
    }

    pub fn variance_error(&self) -> Option<AnalyticError> {
        (!self.variance_finite).then(|| AnalyticError::Domain { reasons: self.reasons.clone() })
    }
}

/// Existence conditions for the binary-object moments at effective exponent `m`.
///
/// `m` is the number of unit-transmittance units for binary objects, and the
/// small-argument exponent of the bucket density (number of nonzero units)
/// for grayscale ones.
pub fn validity_domain(m: f64, mu: f64, nu: f64) -> Validity {
    let mut reasons = Vec::new();
    let mut moment_finite = true;
    let mut variance_finite = true;
    if m + mu + nu <= 0.0 {
        moment_finite = false;
        reasons.push("m+mu+nu <= 0".to_string());
    }
    if m + mu <= 0.0 {
        moment_finite = false;
        reasons.push("m+mu <= 0".to_string());
    }
    if 1.0 + nu <= 0.0 {
        moment_finite = false;
        reasons.push("1+nu <= 0".to_string());
    }
    if m + 2.0 * mu + 2.0 * nu <= 0.0 {
        variance_finite = false;
        reasons.push("m+2mu+2nu <= 0".to_string());
    }
    if 1.0 + 2.0 * nu <= 0.0 {
        variance_finite = false;
        reasons.push("1+2nu <= 0".to_string());
    }
    Validity { moment_finite, variance_finite, reasons }
}

/// [`validity_domain`] for an arbitrary mask, with `m` replaced by the number
/// of nonzero units.
pub fn validity_domain_mask(mask: &ObjectMask, mu: f64, nu: f64) -> Validity {
    let k = mask.units().iter().filter(|&&t| t > 0.0).count();
    validity_domain(k as f64, mu, nu)
}

/// Closed-form predictions for a binary object.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AnalyticPrediction {
    pub m: u64,
    pub mu: f64,
    pub nu: f64,
    pub i0: f64,
    pub moment_background: Option<f64>,
    pub moment_signal: Option<f64>,
    pub visibility: Option<f64>,
    pub peak_snr: Option<f64>,
    pub peak_snr_over_sqrt_n: Option<f64>,
    pub n_samples: Option<u64>,
    pub moment_finite: bool,
    pub variance_finite: bool,
    pub reasons: Vec<String>,
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn validity_examples() {
        let v = validity_domain(20.0, -2.7183, 0.5);
        assert!(v.moment_finite && v.variance_finite);

        let v = validity_domain(2.0, -2.2, 0.1);
        assert!(!v.moment_finite);
        assert!(v.reasons.iter().any(|r| r == "m+mu+nu <= 0"));

        let v = validity_domain(7.0, 1.0, -0.6);
        assert!(v.moment_finite);
        assert!(!v.variance_finite);
        assert_eq!(v.reasons, vec!["1+2nu <= 0".to_string()]);
    }

    #[test]
    fn variance_reason_names_inequality() {
        let v = validity_domain(2.0, -1.5, 0.2);
        assert!(v.moment_finite);
        assert!(!v.variance_finite);
        assert_eq!(v.reasons, vec!["m+2mu+2nu <= 0".to_string()]);
    }
}
