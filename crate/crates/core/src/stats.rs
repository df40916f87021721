//! Normal distribution helpers shared by the accountant and the tests.

use libm::erfc;
use statrs::function::erf::erfc_inv;
use std::f64::consts::SQRT_2;

/// Standard normal CDF.
pub fn norm_cdf(x: f64) -> f64 {
    0.5 * erfc(-x / SQRT_2)
}

/// Standard normal survival function, accurate in the upper tail.
pub fn norm_sf(x: f64) -> f64 {
    0.5 * erfc(x / SQRT_2)
}

/// Standard normal quantile.
pub fn norm_ppf(p: f64) -> f64 {
    if p <= 0.0 {
        return f64::NEG_INFINITY;
    }
    if p >= 1.0 {
        return f64::INFINITY;
    }
    let x = -SQRT_2 * erfc_inv(2.0 * p);
    if !x.is_finite() {
        return x;
    }
    // one Halley step against the accurate CDF
    let pdf = (-0.5 * x * x).exp() / (2.0 * std::f64::consts::PI).sqrt();
    let err = if x < 0.0 { norm_cdf(x) - p } else { (1.0 - p) - norm_sf(x) };
    let u = err / pdf;
    x - u / (1.0 + 0.5 * x * u)
}

/// Mass of `N(mean, sd^2)` on the interval `(lo, hi]`.
///
/// Uses whichever tail keeps the difference well conditioned.
pub fn gaussian_interval(mean: f64, sd: f64, lo: f64, hi: f64) -> f64 {
    if !(hi > lo) {
        return 0.0;
    }
    let a = (lo - mean) / sd;
    let b = (hi - mean) / sd;
    let mass = if a >= 0.0 {
        norm_sf(a) - norm_sf(b)
    } else if b <= 0.0 {
        norm_cdf(b) - norm_cdf(a)
    } else {
        1.0 - norm_cdf(a) - norm_sf(b)
    };
    mass.max(0.0)
}

/// Sample mean and unbiased sample standard deviation.
pub fn mean_std(values: &[f64]) -> (f64, f64) {
    let n = values.len();
    if n == 0 {
        return (f64::NAN, f64::NAN);
    }
    let mean = values.iter().sum::<f64>() / n as f64;
    if n < 2 {
        return (mean, 0.0);
    }
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
    (mean, var.sqrt())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn cdf_and_quantile_agree() {
        for &p in &[1e-12, 1e-6, 0.01, 0.3, 0.5, 0.9, 0.999999] {
            let x = norm_ppf(p);
            assert!((norm_cdf(x) - p).abs() / p < 1e-13, "p={p}");
        }
        let c = norm_cdf(1.0);
        assert!((c - 0.841_344_746_068_542_9).abs() < 1e-16, "{c:e}");
    }

    #[test]
    fn interval_mass_in_far_tail() {
        // P(8 < Z <= 9) computed from survival values
        let expect = 6.220_960_574_271_74e-16 - 1.128_588_405_953_832_4e-19;
        let got = gaussian_interval(0.0, 1.0, 8.0, 9.0);
        assert!((got - expect).abs() / expect < 1e-9);
        assert_eq!(gaussian_interval(0.0, 1.0, 2.0, 1.0), 0.0);
    }
}
