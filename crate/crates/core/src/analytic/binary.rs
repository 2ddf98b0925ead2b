//! Closed forms for binary objects (`t_i ∈ {0, 1}`, `m` unit-transmittance units).

use serde::{Deserialize, Serialize};

use super::gamma::ln_gamma;
use super::pdf::BucketPdfModel;
use super::{validity_domain, AnalyticError, AnalyticPrediction};

fn check_intensity(i0: f64) {
    debug_assert!(i0 > 0.0 && i0.is_finite(), "mean intensity must be positive");
}

/// `ln ⟨I_B^μ I_i^ν⟩_0` at `I_0 = 1`.
fn ln_background(m: f64, mu: f64, nu: f64) -> f64 {
    ln_gamma(m + mu) + ln_gamma(1.0 + nu) - ln_gamma(m)
}

/// `ln ⟨I_B^μ I_i^ν⟩_1` at `I_0 = 1`.
fn ln_signal(m: f64, mu: f64, nu: f64) -> f64 {
    ln_gamma(m + mu + nu) + ln_gamma(1.0 + nu) - ln_gamma(m + nu)
}

/// Background moment `Γ(m+μ)Γ(1+ν)/Γ(m) · I_0^{μ+ν}` (pixels with `t_i = 0`).
pub fn moment_background(m: u64, mu: f64, nu: f64, i0: f64) -> Result<f64, AnalyticError> {
    check_intensity(i0);
    if m == 0 {
        return Err(AnalyticError::TooFewUnits { needed: 1, m });
    }
    let mf = m as f64;
    let mut reasons = Vec::new();
    if mf + mu <= 0.0 {
        reasons.push("m+mu <= 0".to_string());
    }
    if 1.0 + nu <= 0.0 {
        reasons.push("1+nu <= 0".to_string());
    }
    if !reasons.is_empty() {
        return Err(AnalyticError::Domain { reasons });
    }
    Ok((ln_background(mf, mu, nu) + (mu + nu) * i0.ln()).exp())
}

/// Signal moment `Γ(m+μ+ν)Γ(1+ν)/Γ(m+ν) · I_0^{μ+ν}` (pixels with `t_i = 1`).
///
/// At `m = 1` this reduces to `Γ(1+μ+ν) I_0^{μ+ν}`, the single-unit case where
/// the bucket equals the reference intensity.
pub fn moment_signal(m: u64, mu: f64, nu: f64, i0: f64) -> Result<f64, AnalyticError> {
    check_intensity(i0);
    if m == 0 {
        return Err(AnalyticError::TooFewUnits { needed: 1, m });
    }
    let mf = m as f64;
    let mut reasons = Vec::new();
    if mf + mu + nu <= 0.0 {
        reasons.push("m+mu+nu <= 0".to_string());
    }
    if 1.0 + nu <= 0.0 {
        reasons.push("1+nu <= 0".to_string());
    }
    if !reasons.is_empty() {
        return Err(AnalyticError::Domain { reasons });
    }
    Ok((ln_signal(mf, mu, nu) + (mu + nu) * i0.ln()).exp())
}

fn require_binary_domain(m: u64, mu: f64, nu: f64) -> Result<(), AnalyticError> {
    if m < 2 {
        return Err(AnalyticError::TooFewUnits { needed: 2, m });
    }
    match validity_domain(m as f64, mu, nu).moment_error() {
        Some(e) => Err(e),
        None => Ok(()),
    }
}

/// Visibility `|A − B| / (A + B)` with `A = Γ(m+μ+ν)Γ(m)`, `B = Γ(m+μ)Γ(m+ν)`.
///
/// Evaluated as `|tanh((ln A − ln B)/2)|`, which never forms either product.
pub fn visibility(m: u64, mu: f64, nu: f64) -> Result<f64, AnalyticError> {
    require_binary_domain(m, mu, nu)?;
    let mf = m as f64;
    let d = (ln_gamma(mf + mu + nu) - ln_gamma(mf + nu)) - (ln_gamma(mf + mu) - ln_gamma(mf));
    Ok((0.5 * d).tanh().abs())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PeakSnr {
    pub r_p: f64,
    pub r_p_over_sqrt_n: f64,
}

/// Peak SNR of a binary object reconstructed from `n` samples.
///
/// Contrast of the signal and background moments divided by the standard
/// deviation of the signal-pixel product `I_B^μ I_i^ν`, times `√N`. Scale-free
/// in `I_0`.
pub fn peak_snr(m: u64, mu: f64, nu: f64, n: u64) -> Result<PeakSnr, AnalyticError> {
    require_binary_domain(m, mu, nu)?;
    if let Some(e) = validity_domain(m as f64, mu, nu).variance_error() {
        return Err(e);
    }
    let mf = m as f64;
    let ln_sig = ln_signal(mf, mu, nu);
    let ln_bg = ln_background(mf, mu, nu);
    let ln_sig2 = ln_signal(mf, 2.0 * mu, 2.0 * nu);
    // |a - b| / sqrt|s2 - a^2| with a factored out of both
    let contrast = (ln_bg - ln_sig).exp_m1().abs();
    let spread = (ln_sig2 - 2.0 * ln_sig).exp_m1().abs().sqrt();
    let per_root_n = contrast / spread;
    Ok(PeakSnr { r_p: per_root_n * (n as f64).sqrt(), r_p_over_sqrt_n: per_root_n })
}

/// All binary-object predictions with validity flags; divergent quantities are `None`.
pub fn predict(m: u64, mu: f64, nu: f64, n: Option<u64>, i0: f64) -> AnalyticPrediction {
    let validity = validity_domain(m as f64, mu, nu);
    let snr = peak_snr(m, mu, nu, n.unwrap_or(1)).ok();
    AnalyticPrediction {
        m,
        mu,
        nu,
        i0,
        moment_background: moment_background(m, mu, nu, i0).ok().filter(|_| validity.moment_finite),
        moment_signal: moment_signal(m, mu, nu, i0).ok().filter(|_| validity.moment_finite),
        visibility: visibility(m, mu, nu).ok(),
        peak_snr: n.and(snr.map(|s| s.r_p)),
        peak_snr_over_sqrt_n: snr.map(|s| s.r_p_over_sqrt_n),
        n_samples: n,
        moment_finite: validity.moment_finite,
        variance_finite: validity.variance_finite,
        reasons: validity.reasons,
    }
}

/// Erlang bucket density of a binary object with `m` open units.
pub fn bucket_pdf_binary(m: u64, i0: f64) -> Result<BucketPdfModel, AnalyticError> {
    if m == 0 {
        return Err(AnalyticError::TooFewUnits { needed: 1, m });
    }
    check_intensity(i0);
    Ok(BucketPdfModel::Erlang { shape: m, scale: i0 })
}

/// Joint density of bucket `I_B` and reference `I_i` for a binary object.
///
/// `t_i = 1`: `(I_B−I_i)^{m−2} e^{−I_B/I_0} / ((m−2)! I_0^m)` on `I_i ≤ I_B`.
/// `t_i = 0`: the product of the Erlang(m) bucket density and the exponential
/// reference density.
pub fn joint_pdf_binary(
    m: u64,
    i0: f64,
    bucket: f64,
    reference: f64,
    unit_open: bool,
) -> Result<f64, AnalyticError> {
    check_intensity(i0);
    if bucket < 0.0 || reference < 0.0 {
        return Err(AnalyticError::NegativeIntensity);
    }
    if unit_open {
        if m < 2 {
            return Err(AnalyticError::TooFewUnits { needed: 2, m });
        }
        if reference > bucket {
            return Ok(0.0);
        }
        let rest = bucket - reference;
        let k = (m - 2) as f64;
        let ln_norm = ln_gamma(k + 1.0) + m as f64 * i0.ln();
        if m > 2 && rest == 0.0 {
            return Ok(0.0);
        }
        let ln_poly = if m == 2 { 0.0 } else { k * rest.ln() };
        Ok((ln_poly - bucket / i0 - ln_norm).exp())
    } else {
        let pb = bucket_pdf_binary(m, i0)?.pdf(bucket);
        Ok(pb * (-reference / i0).exp() / i0)
    }
}
