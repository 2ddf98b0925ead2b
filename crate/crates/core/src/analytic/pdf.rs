//! Bucket-signal densities.
//!
//! The bucket `I_B = Σ t_i I_i` is a sum of independent exponentials with
//! means `I_0 t_i`. Its Laplace transform is `Π_j (1 + s a_j)^{-k_j}` where the
//! `a_j = I_0 τ_j` are the distinct nonzero scales and `k_j` their multiplicities.
//! A single distinct scale gives an Erlang law. Several distinct scales are
//! expanded in partial fractions into a signed mixture of Erlang terms; if that
//! expansion is ill-conditioned the transform is inverted numerically along a
//! fixed Talbot contour instead.

use num_complex::Complex64;

use super::gamma::ln_gamma;
use super::AnalyticError;
use crate::object_model::ObjectMask;

/// Relative gap below which two distinct scales are treated as a clustered pole.
pub const POLE_CLUSTER_TOL: f64 = 1e-6;
/// Largest tolerated `Σ|c_jl|` of a partial-fraction expansion.
pub const MAX_EXPANSION_GAIN: f64 = 1e6;
/// Node count of the Talbot contour used by the numerical fallback.
pub const TALBOT_NODES: usize = 24;

/// A distinct exponential scale `a = I_0 τ` with multiplicity `k`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Pole {
    pub scale: f64,
    pub multiplicity: u64,
}

/// Erlang terms sharing one scale: density `Σ_l coeffs[l-1] · Erlang(l, scale)`.
#[derive(Debug, Clone, PartialEq)]
pub struct PoleTerm {
    pub scale: f64,
    pub coeffs: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PartialFractions {
    pub terms: Vec<PoleTerm>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TalbotInversion {
    pub poles: Vec<Pole>,
    pub nodes: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub enum BucketPdfModel {
    Erlang { shape: u64, scale: f64 },
    Hypoexponential(PartialFractions),
    NumericalInversion(TalbotInversion),
}

fn erlang_pdf(shape: u64, scale: f64, x: f64) -> f64 {
    if x < 0.0 {
        return 0.0;
    }
    if x == 0.0 {
        return if shape == 1 { 1.0 / scale } else { 0.0 };
    }
    let y = x / scale;
    ((shape - 1) as f64 * y.ln() - y - ln_gamma(shape as f64)).exp() / scale
}

/// Regularized lower incomplete gamma `P(k, y)` for integer `k ≥ 1`.
pub(crate) fn regularized_gamma_p(k: u64, y: f64) -> f64 {
    if y <= 0.0 {
        return 0.0;
    }
    let kf = k as f64;
    let ln_front = kf * y.ln() - y - ln_gamma(kf + 1.0);
    if y < kf + 1.0 {
        // e^{-y} y^k / k! · Σ_{q≥0} y^q / ((k+1)…(k+q))
        let mut term = 1.0;
        let mut sum = 1.0;
        let mut q = 1.0;
        while term > sum * 1e-17 {
            term *= y / (kf + q);
            sum += term;
            q += 1.0;
        }
        (ln_front.exp() * sum).min(1.0)
    } else {
        // 1 - e^{-y} Σ_{q<k} y^q/q!, summed downward from q = k-1
        let mut term = (ln_front + (kf / y).ln()).exp();
        let mut upper = 0.0;
        let mut q = kf - 1.0;
        while q >= 0.0 {
            upper += term;
            term *= q / y;
            q -= 1.0;
        }
        (1.0 - upper).max(0.0)
    }
}

fn erlang_cdf(shape: u64, scale: f64, x: f64) -> f64 {
    regularized_gamma_p(shape, x / scale)
}

impl PartialFractions {
    /// Expands `Π_j (1 + s a_j)^{-k_j}` over the given distinct poles.
    ///
    /// Around pole `j` put `u = 1 + s a_j`; the cofactor becomes
    /// `Π_{k≠j} ((1 − r_k) + r_k u)^{-k_k}` with `r_k = a_k / a_j`, whose power
    /// series in `u` truncated at degree `k_j − 1` yields the coefficients of
    /// `(1 + s a_j)^{-l}` for `l = k_j, …, 1`.
    pub fn expand(poles: &[Pole]) -> Self {
        let terms = poles
            .iter()
            .enumerate()
            .map(|(j, pj)| {
                let deg = pj.multiplicity as usize;
                let mut series = vec![0.0; deg];
                series[0] = 1.0;
                for (k, pk) in poles.iter().enumerate() {
                    if k == j {
                        continue;
                    }
                    let r = pk.scale / pj.scale;
                    let factor = binomial_series(1.0 - r, r, pk.multiplicity, deg);
                    series = truncated_product(&series, &factor);
                }
                let coeffs = (1..=deg).map(|l| series[deg - l]).collect();
                PoleTerm { scale: pj.scale, coeffs }
            })
            .collect();
        PartialFractions { terms }
    }

    /// `Σ |c_jl|`; equals one for a positive mixture and grows with cancellation.
    pub fn gain(&self) -> f64 {
        self.terms.iter().flat_map(|t| t.coeffs.iter()).map(|c| c.abs()).sum()
    }

    pub fn pdf(&self, x: f64) -> f64 {
        self.terms
            .iter()
            .flat_map(|t| {
                t.coeffs.iter().enumerate().map(move |(l, c)| c * erlang_pdf(l as u64 + 1, t.scale, x))
            })
            .sum()
    }

    pub fn cdf(&self, x: f64) -> f64 {
        self.terms
            .iter()
            .flat_map(|t| {
                t.coeffs.iter().enumerate().map(move |(l, c)| c * erlang_cdf(l as u64 + 1, t.scale, x))
            })
            .sum()
    }
}

/// First `len` coefficients of `(alpha + beta u)^{-k}` in powers of `u`.
fn binomial_series(alpha: f64, beta: f64, k: u64, len: usize) -> Vec<f64> {
    let mut out = Vec::with_capacity(len);
    let mut c = alpha.powi(-(k as i32));
    let ratio = -beta / alpha;
    for q in 0..len {
        if q > 0 {
            c *= (k as f64 + q as f64 - 1.0) / q as f64 * ratio;
        }
        out.push(c);
    }
    out
}

fn truncated_product(a: &[f64], b: &[f64]) -> Vec<f64> {
    let len = a.len();
    let mut out = vec![0.0; len];
    for (i, &ai) in a.iter().enumerate() {
        for (j, &bj) in b.iter().take(len - i).enumerate() {
            out[i + j] += ai * bj;
        }
    }
    out
}

impl TalbotInversion {
    fn laplace(&self, s: Complex64) -> Complex64 {
        let ln: Complex64 = self
            .poles
            .iter()
            .map(|p| -(p.multiplicity as f64) * (Complex64::new(1.0, 0.0) + s * p.scale).ln())
            .sum();
        ln.exp()
    }

    /// Fixed-Talbot inversion of `F` at `t > 0`.
    fn invert<F: Fn(Complex64) -> Complex64>(&self, f: F, t: f64) -> f64 {
        let m = self.nodes as f64;
        let r = 2.0 * m / (5.0 * t);
        let mut acc = 0.5 * (f(Complex64::new(r, 0.0)) * (r * t).exp()).re;
        for k in 1..self.nodes {
            let theta = k as f64 * std::f64::consts::PI / m;
            let cot = theta.cos() / theta.sin();
            let s = Complex64::new(r * theta * cot, r * theta);
            let sigma = theta + (theta * cot - 1.0) * cot;
            acc += ((s * t).exp() * f(s) * Complex64::new(1.0, sigma)).re;
        }
        r / m * acc
    }

    pub fn pdf(&self, x: f64) -> f64 {
        if x < 0.0 {
            return 0.0;
        }
        if x == 0.0 {
            let k: u64 = self.poles.iter().map(|p| p.multiplicity).sum();
            return if k == 1 { 1.0 / self.poles[0].scale } else { 0.0 };
        }
        self.invert(|s| self.laplace(s), x).max(0.0)
    }

    pub fn cdf(&self, x: f64) -> f64 {
        if x <= 0.0 {
            return 0.0;
        }
        self.invert(|s| self.laplace(s) / s, x).clamp(0.0, 1.0)
    }
}

impl BucketPdfModel {
    /// Builds the model for the given distinct poles, choosing the representation.
    pub fn from_poles(poles: Vec<Pole>) -> Result<Self, AnalyticError> {
        if poles.is_empty() {
            return Err(AnalyticError::EmptyMask);
        }
        if poles.len() == 1 {
            return Ok(BucketPdfModel::Erlang { shape: poles[0].multiplicity, scale: poles[0].scale });
        }
        let clustered = poles.iter().enumerate().any(|(i, p)| {
            poles[i + 1..]
                .iter()
                .any(|q| (p.scale - q.scale).abs() <= POLE_CLUSTER_TOL * p.scale.max(q.scale))
        });
        if !clustered {
            let pf = PartialFractions::expand(&poles);
            let gain = pf.gain();
            if gain.is_finite() && gain <= MAX_EXPANSION_GAIN {
                return Ok(BucketPdfModel::Hypoexponential(pf));
            }
            log::debug!("partial fractions gain {gain:e}; using contour inversion");
        }
        Ok(BucketPdfModel::NumericalInversion(TalbotInversion { poles, nodes: TALBOT_NODES }))
    }

    pub fn pdf(&self, x: f64) -> f64 {
        match self {
            BucketPdfModel::Erlang { shape, scale } => erlang_pdf(*shape, *scale, x),
            // signed sums leave rounding residue of order gain·ε; the density is nonnegative
            BucketPdfModel::Hypoexponential(pf) => pf.pdf(x).max(0.0),
            BucketPdfModel::NumericalInversion(t) => t.pdf(x).max(0.0),
        }
    }

    pub fn cdf(&self, x: f64) -> f64 {
        match self {
            BucketPdfModel::Erlang { shape, scale } => erlang_cdf(*shape, *scale, x),
            BucketPdfModel::Hypoexponential(pf) => pf.cdf(x).clamp(0.0, 1.0),
            BucketPdfModel::NumericalInversion(t) => t.cdf(x).clamp(0.0, 1.0),
        }
    }

    /// Distinct poles underlying the model.
    pub fn poles(&self) -> Vec<Pole> {
        match self {
            BucketPdfModel::Erlang { shape, scale } => vec![Pole { scale: *scale, multiplicity: *shape }],
            BucketPdfModel::Hypoexponential(pf) => pf
                .terms
                .iter()
                .map(|t| Pole { scale: t.scale, multiplicity: t.coeffs.len() as u64 })
                .collect(),
            BucketPdfModel::NumericalInversion(t) => t.poles.clone(),
        }
    }

    pub fn mean(&self) -> f64 {
        self.poles().iter().map(|p| p.multiplicity as f64 * p.scale).sum()
    }

    /// Exponent `K` of the small-argument behaviour `P_B(x) ~ x^{K−1}`.
    pub fn small_x_exponent(&self) -> u64 {
        self.poles().iter().map(|p| p.multiplicity).sum()
    }

    pub fn largest_scale(&self) -> f64 {
        self.poles().iter().map(|p| p.scale).fold(0.0, f64::max)
    }
}

/// Distinct nonzero scales `I_0 τ_j` of a mask with their multiplicities.
pub fn poles_of(mask: &ObjectMask, i0: f64) -> Vec<Pole> {
    mask.histogram()
        .into_iter()
        .filter(|&(tau, _)| tau > 0.0)
        .map(|(tau, k)| Pole { scale: i0 * tau, multiplicity: k as u64 })
        .collect()
}

/// Bucket density of an arbitrary mask; zero-transmittance units drop out.
pub fn bucket_pdf_general(mask: &ObjectMask, i0: f64) -> Result<BucketPdfModel, AnalyticError> {
    BucketPdfModel::from_poles(poles_of(mask, i0))
}
