//! Fractional moments `⟨I_B^μ I_i^ν⟩` of an arbitrary (grayscale) mask.
//!
//! The joint law factorizes as `I_B = X + t_i Y` with `Y = I_i` exponential and
//! `X` the bucket of the mask with unit `i` removed, independent of `Y`. The
//! density of `X` is a signed mixture of Erlang terms `Gamma(l, a)`, so the
//! moment is a combination of
//!
//! ```text
//! J(l, a, b) = E[(a V + b U)^μ U^ν],  V ~ Gamma(l, 1), U ~ Exp(1), b = t_i I_0.
//! ```
//!
//! Substituting `a V = r w`, `b U = r (1 − w)` integrates the radial variable in
//! closed form and leaves
//!
//! ```text
//! J = Γ(p) / (Γ(l) a^l b^{1+ν}) ∫_0^1 w^{l−1} (1−w)^ν (w/a + (1−w)/b)^{−p} dw,
//! p = l + μ + ν + 1,
//! ```
//!
//! a bounded smooth integrand against a Jacobi weight, handled by Gauss–Jacobi
//! rules of increasing size.

use super::gamma::ln_gamma;
use super::pdf::{poles_of, BucketPdfModel, PartialFractions, Pole};
use super::{validity_domain, AnalyticError};
use crate::numerics::quadrature::gauss_jacobi;
use crate::object_model::ObjectMask;

/// Relative agreement required between two successive rule sizes.
pub const REFINE_TOL: f64 = 1e-8;
/// Node counts tried in turn.
pub const RULE_SIZES: [usize; 6] = [8, 16, 32, 64, 128, 256];

/// Largest tolerated `Σ|c J| / |Σ c J|` when combining signed mixture terms.
const MAX_CANCELLATION: f64 = 1e6;

/// `E[(aV + bU)^μ U^ν]` on a Gauss–Jacobi rule of `n` nodes.
fn radial_term(l: u64, a: f64, b: f64, mu: f64, nu: f64, n: usize) -> f64 {
    let lf = l as f64;
    let p = lf + mu + nu + 1.0;
    let cmin = (1.0 / a).min(1.0 / b);
    // w ∈ [0,1] ↔ x ∈ [-1,1], w = (1+x)/2: weight (1-x)^ν (1+x)^{l-1}
    let ln_front = ln_gamma(p) - ln_gamma(lf) - lf * a.ln() - (1.0 + nu) * b.ln() - p * cmin.ln()
        - (lf + nu) * std::f64::consts::LN_2;
    let rule = gauss_jacobi(n, nu, lf - 1.0);
    let integral = rule.integrate(|x| {
        let w = 0.5 * (1.0 + x);
        let c = w / a + (1.0 - w) / b;
        (c / cmin).powf(-p)
    });
    ln_front.exp() * integral
}

/// `E[X^μ]` of a signed Erlang mixture.
fn mixture_power_moment(pf: &PartialFractions, mu: f64) -> Result<f64, AnalyticError> {
    let mut total = 0.0;
    let mut gross = 0.0;
    for term in &pf.terms {
        for (idx, c) in term.coeffs.iter().enumerate() {
            if *c == 0.0 {
                continue;
            }
            let l = (idx + 1) as f64;
            if l + mu <= 0.0 {
                return Err(AnalyticError::IllConditioned(format!(
                    "mixture term Gamma({l}) has no moment of order {mu}"
                )));
            }
            let v = c * (mu * term.scale.ln() + ln_gamma(l + mu) - ln_gamma(l)).exp();
            total += v;
            gross += v.abs();
        }
    }
    check_cancellation(total, gross)?;
    Ok(total)
}

fn check_cancellation(total: f64, gross: f64) -> Result<(), AnalyticError> {
    if !(total.is_finite() && gross.is_finite()) || gross > MAX_CANCELLATION * total.abs() {
        return Err(AnalyticError::IllConditioned(format!(
            "signed mixture cancels: gross {gross:e}, net {total:e}"
        )));
    }
    Ok(())
}

fn mixture_joint_moment(
    pf: &PartialFractions,
    b: f64,
    mu: f64,
    nu: f64,
    n: usize,
) -> Result<f64, AnalyticError> {
    let mut total = 0.0;
    let mut gross = 0.0;
    for term in &pf.terms {
        for (idx, c) in term.coeffs.iter().enumerate() {
            if *c == 0.0 {
                continue;
            }
            let l = (idx + 1) as u64;
            if l as f64 + mu + nu + 1.0 <= 0.0 {
                return Err(AnalyticError::IllConditioned(format!(
                    "mixture term Gamma({l}) diverges at mu={mu}, nu={nu}"
                )));
            }
            let v = c * radial_term(l, term.scale, b, mu, nu, n);
            total += v;
            gross += v.abs();
        }
    }
    check_cancellation(total, gross)?;
    Ok(total)
}

fn expansion_of(poles: Vec<Pole>) -> Result<PartialFractions, AnalyticError> {
    match BucketPdfModel::from_poles(poles)? {
        BucketPdfModel::Erlang { shape, scale } => Ok(PartialFractions {
            terms: vec![super::pdf::PoleTerm {
                scale,
                coeffs: (1..=shape).map(|l| if l == shape { 1.0 } else { 0.0 }).collect(),
            }],
        }),
        BucketPdfModel::Hypoexponential(pf) => Ok(pf),
        BucketPdfModel::NumericalInversion(_) => Err(AnalyticError::IllConditioned(
            "clustered or strongly cancelling poles".to_string(),
        )),
    }
}

/// `⟨I_B^μ I_i^ν⟩` for pixel `index` of `mask` under mean intensity `i0`.
pub fn moment_general(
    mask: &ObjectMask,
    index: usize,
    mu: f64,
    nu: f64,
    i0: f64,
) -> Result<f64, AnalyticError> {
    let units = mask.units();
    if index >= units.len() {
        return Err(AnalyticError::PixelOutOfRange { index, n: units.len() });
    }
    let k_total = units.iter().filter(|&&t| t > 0.0).count();
    if k_total == 0 {
        return Err(AnalyticError::EmptyMask);
    }
    if let Some(e) = validity_domain(k_total as f64, mu, nu).moment_error() {
        return Err(e);
    }
    let t = units[index];
    let reference_moment = (ln_gamma(1.0 + nu) + nu * i0.ln()).exp();
    let mut rest = units.to_vec();
    rest[index] = 0.0;
    let reduced = ObjectMask::new(mask.width(), mask.height(), rest)
        .expect("zeroing a unit keeps the mask valid");
    let poles = poles_of(&reduced, i0);

    if t == 0.0 {
        let pf = expansion_of(poles)?;
        return Ok(mixture_power_moment(&pf, mu)? * reference_moment);
    }
    let b = t * i0;
    if poles.is_empty() {
        // I_B = t I_i exactly
        return Ok((mu * b.ln() + nu * i0.ln() + ln_gamma(1.0 + mu + nu)).exp());
    }
    let pf = expansion_of(poles)?;
    let scale_nu = (nu * i0.ln()).exp();
    let mut previous = mixture_joint_moment(&pf, b, mu, nu, RULE_SIZES[0])?;
    let mut change = f64::INFINITY;
    for &n in &RULE_SIZES[1..] {
        let current = mixture_joint_moment(&pf, b, mu, nu, n)?;
        change = ((current - previous) / current).abs();
        if change <= REFINE_TOL {
            return Ok(current * scale_nu);
        }
        previous = current;
    }
    Err(AnalyticError::NoConvergence { nodes: *RULE_SIZES.last().unwrap(), change })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::analytic::binary::{moment_background, moment_signal};

    fn rel(a: f64, b: f64) -> f64 {
        ((a - b) / b).abs()
    }

    fn binary_mask(m: usize, zeros: usize) -> ObjectMask {
        let mut u = vec![1.0; m];
        u.extend(std::iter::repeat_n(0.0, zeros));
        ObjectMask::new(u.len(), 1, u).unwrap()
    }

    #[test]
    fn equal_scales_reduce_to_beta_integral() {
        // a = b: J = a^μ Γ(l+μ+ν+1) Γ(1+ν) / Γ(l+ν+1)
        for &(l, mu, nu) in &[(1u64, 0.7, 0.5), (4, -1.3, 0.2), (19, 2.7, 1.5)] {
            let got = radial_term(l, 1.7, 1.7, mu, nu, 8);
            let lf = l as f64;
            let want = (mu * 1.7f64.ln() + ln_gamma(lf + mu + nu + 1.0) + ln_gamma(1.0 + nu)
                - ln_gamma(lf + nu + 1.0))
            .exp();
            assert!(rel(got, want) < 1e-12, "l={l}: {got} vs {want}");
        }
    }

    #[test]
    fn binary_signal_and_background_match_closed_forms() {
        let mask = binary_mask(5, 2);
        for &(mu, nu) in &[(0.618, 0.5), (-1.414, 0.5), (2.7183, 1.0), (-2.7183, 0.5), (1.0, 1.0)] {
            let sig = moment_general(&mask, 0, mu, nu, 1.3).unwrap();
            assert!(rel(sig, moment_signal(5, mu, nu, 1.3).unwrap()) < 1e-10, "mu={mu}");
            let bg = moment_general(&mask, 6, mu, nu, 1.3).unwrap();
            assert!(rel(bg, moment_background(5, mu, nu, 1.3).unwrap()) < 1e-10, "mu={mu}");
        }
    }

    #[test]
    fn single_open_unit_is_deterministic_relation() {
        let mask = binary_mask(1, 3);
        let got = moment_general(&mask, 0, 0.5, 0.5, 1.0).unwrap();
        assert!(rel(got, 1.0) < 1e-14); // Γ(2)
        assert!(rel(got, moment_signal(1, 0.5, 0.5, 1.0).unwrap()) < 1e-14);
    }

    #[test]
    fn grey_mask_integer_orders_match_expectation_algebra() {
        let mask = ObjectMask::new(3, 1, vec![0.2, 0.5, 1.0]).unwrap();
        let got = moment_general(&mask, 1, 1.0, 1.0, 1.0).unwrap();
        assert!((got - 2.2).abs() < 1e-8 * 2.2, "{got}");
        // E[I_B^2 I_i] = Σ_jk t_j t_k E[I_j I_k I_i], all units exponential(I_0)
        let t = [0.2, 0.5, 1.0];
        let mut want = 0.0;
        for j in 0..3 {
            for k in 0..3 {
                let e = match (j == 1, k == 1, j == k) {
                    (true, true, _) => 6.0,
                    (_, _, true) => 2.0,
                    (true, false, _) | (false, true, _) => 2.0,
                    _ => 1.0,
                };
                want += t[j] * t[k] * e;
            }
        }
        let got = moment_general(&mask, 1, 2.0, 1.0, 1.0).unwrap();
        assert!(rel(got, want) < 1e-8, "{got} vs {want}");
    }

    #[test]
    fn rejects_bad_inputs() {
        let mask = binary_mask(2, 1);
        assert!(matches!(moment_general(&mask, 9, 1.0, 1.0, 1.0), Err(AnalyticError::PixelOutOfRange { .. })));
        assert!(matches!(moment_general(&mask, 0, -2.5, 0.1, 1.0), Err(AnalyticError::Domain { .. })));
        let empty = ObjectMask::new(2, 1, vec![0.0, 0.0]).unwrap();
        assert_eq!(moment_general(&empty, 0, 1.0, 1.0, 1.0), Err(AnalyticError::EmptyMask));
    }
}
