//! One-sample Kolmogorov–Smirnov test.

/// Largest distance between the empirical CDF of `samples` and `cdf`.
pub fn ks_statistic<F: Fn(f64) -> f64>(samples: &[f64], cdf: F) -> f64 {
    let mut sorted = samples.to_vec();
    sorted.sort_by(f64::total_cmp);
    let n = sorted.len() as f64;
    sorted
        .iter()
        .enumerate()
        .map(|(k, &x)| {
            let f = cdf(x);
            (f - k as f64 / n).max((k + 1) as f64 / n - f)
        })
        .fold(0.0, f64::max)
}

/// Asymptotic p-value of statistic `d` for `n` samples, with Stephens'
/// small-sample correction `λ = (√n + 0.12 + 0.11/√n) d`.
pub fn ks_p_value(d: f64, n: usize) -> f64 {
    let sn = (n as f64).sqrt();
    let lambda = (sn + 0.12 + 0.11 / sn) * d;
    if lambda < 0.2 {
        return 1.0;
    }
    let mut sum = 0.0;
    for k in 1..=100 {
        let kf = k as f64;
        let term = (-2.0 * kf * kf * lambda * lambda).exp();
        sum += if k % 2 == 1 { term } else { -term };
        if term < 1e-18 {
            break;
        }
    }
    (2.0 * sum).clamp(0.0, 1.0)
}

/// `(D, p)` for `samples` against `cdf`.
pub fn ks_test<F: Fn(f64) -> f64>(samples: &[f64], cdf: F) -> (f64, f64) {
    let d = ks_statistic(samples, cdf);
    (d, ks_p_value(d, samples.len()))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn uniform_grid_has_small_statistic() {
        let xs: Vec<f64> = (0..1000).map(|k| (k as f64 + 0.5) / 1000.0).collect();
        let (d, p) = ks_test(&xs, |x| x.clamp(0.0, 1.0));
        assert!((d - 0.0005).abs() < 1e-12);
        assert!(p > 0.99);
    }

    #[test]
    fn shifted_sample_is_rejected() {
        let xs: Vec<f64> = (0..1000).map(|k| (k as f64 + 0.5) / 1000.0 * 0.8).collect();
        let (_, p) = ks_test(&xs, |x| x.clamp(0.0, 1.0));
        assert!(p < 1e-10);
    }

    #[test]
    fn known_critical_value() {
        // λ = 1.9495 is the 0.001 critical point of the Kolmogorov distribution
        let p = ks_p_value(1.9495 / (1e6f64).sqrt(), 1_000_000);
        assert!((p - 1e-3).abs() < 2e-5, "{p}");
    }
}
