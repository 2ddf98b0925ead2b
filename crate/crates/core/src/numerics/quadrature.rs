//! Gaussian rules for weighted integrals and an adaptive Gauss–Kronrod integrator.
//!
//! Gauss rules are built with the Golub–Welsch construction: the nodes are the
//! eigenvalues of the symmetric Jacobi matrix of the three-term recurrence and
//! the weights come from the first components of its eigenvectors.

use nalgebra::{DMatrix, SymmetricEigen};

use crate::analytic::gamma::ln_gamma;

/// Nodes and weights of an `n`-point Gauss rule.
#[derive(Debug, Clone, PartialEq)]
pub struct GaussRule {
    pub nodes: Vec<f64>,
    pub weights: Vec<f64>,
}

impl GaussRule {
    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    /// `Σ w_k f(x_k)`.
    pub fn integrate<F: FnMut(f64) -> f64>(&self, mut f: F) -> f64 {
        self.nodes
            .iter()
            .zip(&self.weights)
            .map(|(&x, &w)| w * f(x))
            .sum()
    }

    fn from_recurrence(diag: Vec<f64>, offdiag: Vec<f64>, mu0: f64) -> Self {
        let n = diag.len();
        let mut jac = DMatrix::<f64>::zeros(n, n);
        for i in 0..n {
            jac[(i, i)] = diag[i];
            if i + 1 < n {
                jac[(i, i + 1)] = offdiag[i];
                jac[(i + 1, i)] = offdiag[i];
            }
        }
        let eig = SymmetricEigen::new(jac);
        let mut pairs: Vec<(f64, f64)> = (0..n)
            .map(|k| {
                let v0 = eig.eigenvectors[(0, k)];
                (eig.eigenvalues[k], mu0 * v0 * v0)
            })
            .collect();
        pairs.sort_by(|a, b| a.0.total_cmp(&b.0));
        let (nodes, weights) = pairs.into_iter().unzip();
        GaussRule { nodes, weights }
    }
}

/// Gauss–Jacobi rule on `[-1, 1]` for the weight `(1-x)^alpha (1+x)^beta`.
pub fn gauss_jacobi(n: usize, alpha: f64, beta: f64) -> GaussRule {
    assert!(n >= 1, "rule needs at least one node");
    assert!(alpha > -1.0 && beta > -1.0, "Jacobi exponents must exceed -1");
    let ab = alpha + beta;
    let diag = (0..n)
        .map(|k| {
            let k = k as f64;
            if k == 0.0 {
                (beta - alpha) / (ab + 2.0)
            } else {
                let s = 2.0 * k + ab;
                (beta * beta - alpha * alpha) / (s * (s + 2.0))
            }
        })
        .collect();
    let offdiag = (1..n)
        .map(|k| {
            let k = k as f64;
            let b = if k == 1.0 {
                4.0 * (1.0 + alpha) * (1.0 + beta) / ((2.0 + ab).powi(2) * (3.0 + ab))
            } else {
                let s = 2.0 * k + ab;
                4.0 * k * (k + alpha) * (k + beta) * (k + ab) / (s * s * (s + 1.0) * (s - 1.0))
            };
            b.sqrt()
        })
        .collect();
    let ln_mu0 = (ab + 1.0) * std::f64::consts::LN_2 + ln_gamma(alpha + 1.0) + ln_gamma(beta + 1.0)
        - ln_gamma(ab + 2.0);
    GaussRule::from_recurrence(diag, offdiag, ln_mu0.exp())
}

/// Generalized Gauss–Laguerre rule on `[0, ∞)` for the weight `x^alpha e^{-x}`.
pub fn gauss_laguerre(n: usize, alpha: f64) -> GaussRule {
    assert!(n >= 1, "rule needs at least one node");
    assert!(alpha > -1.0, "Laguerre exponent must exceed -1");
    let diag = (0..n).map(|k| 2.0 * k as f64 + alpha + 1.0).collect();
    let offdiag = (1..n)
        .map(|k| {
            let k = k as f64;
            (k * (k + alpha)).sqrt()
        })
        .collect();
    GaussRule::from_recurrence(diag, offdiag, ln_gamma(alpha + 1.0).exp())
}

const XGK: [f64; 8] = [
    0.991_455_371_120_812_6,
    0.949_107_912_342_758_5,
    0.864_864_423_359_769_1,
    0.741_531_185_599_394_4,
    0.586_087_235_467_691_1,
    0.405_845_151_377_397_2,
    0.207_784_955_007_898_5,
    0.0,
];
const WGK: [f64; 8] = [
    0.022_935_322_010_529_22,
    0.063_092_092_629_978_55,
    0.104_790_010_322_250_2,
    0.140_653_259_715_525_9,
    0.169_004_726_639_267_9,
    0.190_350_578_064_785_4,
    0.204_432_940_075_298_9,
    0.209_482_141_084_727_8,
];
const WG: [f64; 4] = [
    0.129_484_966_168_869_7,
    0.279_705_391_489_276_7,
    0.381_830_050_505_118_9,
    0.417_959_183_673_469_4,
];

fn gk15<F: FnMut(f64) -> f64>(f: &mut F, a: f64, b: f64) -> (f64, f64) {
    let c = 0.5 * (a + b);
    let h = 0.5 * (b - a);
    let fc = f(c);
    let mut kron = WGK[7] * fc;
    let mut gauss = WG[3] * fc;
    for j in 0..7 {
        let dx = h * XGK[j];
        let s = f(c - dx) + f(c + dx);
        kron += WGK[j] * s;
        if j % 2 == 1 {
            gauss += WG[j / 2] * s;
        }
    }
    (kron * h, ((kron - gauss) * h).abs())
}

/// Globally adaptive 15-point Gauss–Kronrod integration of `f` over `[a, b]`.
///
/// Bisects the interval with the largest error estimate until the summed
/// estimate falls below `max(abs_tol, rel_tol·|I|)` or `max_intervals` is hit.
/// Returns the integral and the final error estimate.
pub fn integrate_adaptive<F: FnMut(f64) -> f64>(
    mut f: F,
    a: f64,
    b: f64,
    abs_tol: f64,
    rel_tol: f64,
    max_intervals: usize,
) -> (f64, f64) {
    let (v, e) = gk15(&mut f, a, b);
    let mut parts = vec![(a, b, v, e)];
    loop {
        let total: f64 = parts.iter().map(|p| p.2).sum();
        let err: f64 = parts.iter().map(|p| p.3).sum();
        if err <= abs_tol.max(rel_tol * total.abs()) || parts.len() >= max_intervals {
            return (total, err);
        }
        let worst = parts
            .iter()
            .enumerate()
            .max_by(|x, y| x.1 .3.total_cmp(&y.1 .3))
            .map(|(i, _)| i)
            .unwrap_or(0);
        let (lo, hi, _, _) = parts.swap_remove(worst);
        let mid = 0.5 * (lo + hi);
        let (v1, e1) = gk15(&mut f, lo, mid);
        let (v2, e2) = gk15(&mut f, mid, hi);
        parts.push((lo, mid, v1, e1));
        parts.push((mid, hi, v2, e2));
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn laguerre_integrates_polynomials_exactly() {
        // ∫ x^a x^k e^{-x} = Γ(a+k+1)
        let rule = gauss_laguerre(8, 0.5);
        for k in 0..15 {
            let got = rule.integrate(|x| x.powi(k));
            let want = ln_gamma(1.5 + k as f64).exp();
            assert!((got / want - 1.0).abs() < 1e-11, "k={k}: {got} vs {want}");
        }
    }

    #[test]
    fn jacobi_weights_sum_to_beta_integral() {
        let rule = gauss_jacobi(12, 0.3, 2.0);
        let total: f64 = rule.weights.iter().sum();
        let want = (3.3 * std::f64::consts::LN_2 + ln_gamma(1.3) + ln_gamma(3.0) - ln_gamma(4.3)).exp();
        assert!((total / want - 1.0).abs() < 1e-13);
        assert!(rule.nodes.iter().all(|&x| x > -1.0 && x < 1.0));
        // exact for degree 2n-1: ∫(1-x)^0.3 (1+x)^2 x^3
        let got = rule.integrate(|x| x.powi(3));
        let (q, _) = integrate_adaptive(|x| (1.0 - x).powf(0.3) * (1.0 + x).powi(2) * x.powi(3), -1.0, 1.0, 1e-14, 1e-13, 200);
        assert!((got - q).abs() < 1e-10, "{got} vs {q}");
    }

    #[test]
    fn adaptive_handles_peaked_integrand() {
        let (v, _) = integrate_adaptive(|x| (-x).exp(), 0.0, 50.0, 1e-14, 1e-13, 500);
        assert!((v - (1.0 - (-50.0f64).exp())).abs() < 1e-12);
        let (v, _) = integrate_adaptive(|x| 1.0 / (1e-4 + x * x), -1.0, 1.0, 1e-12, 1e-12, 1000);
        let want = 2.0 * (1.0f64 / 1e-2).atan() / 1e-2;
        assert!((v / want - 1.0).abs() < 1e-10);
    }
}
