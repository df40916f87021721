//! Helpers shared by the integration test targets.
#![allow(dead_code)]

/// Two-sample Kolmogorov-Smirnov statistic.
pub fn ks_statistic(a: &[f64], b: &[f64]) -> f64 {
    let mut a = a.to_vec();
    let mut b = b.to_vec();
    a.sort_by(f64::total_cmp);
    b.sort_by(f64::total_cmp);
    let (mut i, mut j, mut d) = (0, 0, 0.0f64);
    while i < a.len() && j < b.len() {
        let x = a[i].min(b[j]);
        while i < a.len() && a[i] <= x {
            i += 1;
        }
        while j < b.len() && b[j] <= x {
            j += 1;
        }
        d = d.max((i as f64 / a.len() as f64 - j as f64 / b.len() as f64).abs());
    }
    d
}

/// Asymptotic critical value at level 0.01: `c(0.01) = sqrt(-ln(0.005) / 2)`.
pub fn ks_critical_001(n: usize, m: usize) -> f64 {
    let c = (-(0.005f64).ln() / 2.0).sqrt();
    c * ((n + m) as f64 / (n * m) as f64).sqrt()
}

pub fn normal_pdf(x: f64, mean: f64, sd: f64) -> f64 {
    let z = (x - mean) / sd;
    (-0.5 * z * z).exp() / (sd * (2.0 * std::f64::consts::PI).sqrt())
}

/// `int max(0, p - e^eps q)` by composite Simpson, split at the crossing point.
pub fn hockey_stick_quadrature<P: Fn(f64) -> f64, Q: Fn(f64) -> f64>(
    p: P,
    q: Q,
    epsilon: f64,
    lo: f64,
    hi: f64,
) -> f64 {
    let f = |x: f64| (p(x) - epsilon.exp() * q(x)).max(0.0);
    let g = |x: f64| p(x) - epsilon.exp() * q(x);
    // the likelihood ratio is monotone, so there is at most one crossing
    let mut knots = vec![lo, hi];
    if g(lo).signum() != g(hi).signum() {
        let (mut a, mut b) = (lo, hi);
        for _ in 0..200 {
            let m = 0.5 * (a + b);
            if g(m).signum() == g(a).signum() {
                a = m;
            } else {
                b = m;
            }
        }
        knots.insert(1, 0.5 * (a + b));
    }
    knots
        .windows(2)
        .map(|w| {
            let n = 200_000;
            let h = (w[1] - w[0]) / n as f64;
            let mut s = f(w[0]) + f(w[1]);
            for i in 1..n {
                s += f(w[0] + i as f64 * h) * if i % 2 == 1 { 4.0 } else { 2.0 };
            }
            s * h / 3.0
        })
        .sum()
}
