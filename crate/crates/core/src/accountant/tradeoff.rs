//! Trade-off curves `beta(alpha)`: the smallest false negative rate at a
//! given false positive rate when telling two neighbouring outputs apart.

use serde::{Deserialize, Serialize};

use crate::stats::{norm_cdf, norm_ppf};

use super::mog::MogTradeoff;

/// Signed epsilon grid used when converting a privacy profile into a curve.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ProfileGrid {
    pub min: f64,
    pub max: f64,
    pub step: f64,
}

impl Default for ProfileGrid {
    fn default() -> Self {
        Self {
            min: -20.0,
            max: 20.0,
            step: 0.01,
        }
    }
}

impl ProfileGrid {
    pub fn values(&self) -> Vec<f64> {
        let n = ((self.max - self.min) / self.step).round() as usize;
        (0..=n).map(|i| self.min + i as f64 * self.step).collect()
    }
}

/// Lower envelope of the supporting lines implied by a privacy profile.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProfileTradeoff {
    /// `(e^eps, e^-eps, 1 - delta(eps))` per grid point.
    lines: Vec<(f64, f64, f64)>,
}

impl ProfileTradeoff {
    pub fn beta(&self, alpha: f64) -> f64 {
        let alpha = alpha.clamp(0.0, 1.0);
        let best = self
            .lines
            .iter()
            .map(|&(up, down, c)| (c - up * alpha).max(down * (c - alpha)))
            .fold(0.0f64, f64::max);
        best.min(1.0 - alpha)
    }
}

/// Trade-off curve sampled on a uniform alpha grid, evaluated by linear interpolation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SampledTradeoff {
    betas: Vec<f64>,
}

impl SampledTradeoff {
    pub fn new(betas: Vec<f64>) -> Self {
        assert!(betas.len() >= 2, "need at least both endpoints");
        Self { betas }
    }

    pub fn points(&self) -> usize {
        self.betas.len()
    }

    pub fn alpha_at(&self, i: usize) -> f64 {
        i as f64 / (self.betas.len() - 1) as f64
    }

    pub fn betas(&self) -> &[f64] {
        &self.betas
    }

    pub fn beta(&self, alpha: f64) -> f64 {
        let alpha = alpha.clamp(0.0, 1.0);
        let last = self.betas.len() - 1;
        let pos = alpha * last as f64;
        let i = (pos.floor() as usize).min(last - 1);
        let frac = pos - i as f64;
        if frac == 0.0 {
            return self.betas[i];
        }
        self.betas[i] * (1.0 - frac) + self.betas[i + 1] * frac
    }
}

/// An evaluable trade-off function.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum TradeoffCurve {
    /// `Phi(Phi^-1(1 - alpha) - mu)`, the Gaussian mechanism with effect size `mu`.
    Gaussian { mu: f64 },
    /// Hidden-state linear-loss mixture baseline.
    Mog(MogTradeoff),
    /// Derived from a privacy profile.
    Profile(ProfileTradeoff),
    Sampled(SampledTradeoff),
}

impl TradeoffCurve {
    pub fn beta(&self, alpha: f64) -> f64 {
        match self {
            TradeoffCurve::Gaussian { mu } => gaussian_tradeoff(*mu, alpha),
            TradeoffCurve::Mog(m) => m.beta(alpha),
            TradeoffCurve::Profile(p) => p.beta(alpha),
            TradeoffCurve::Sampled(s) => s.beta(alpha),
        }
    }

    /// Samples `points` evenly spaced alphas in `[0, 1]`.
    pub fn to_sampled(&self, points: usize) -> SampledTradeoff {
        let n = points.max(2);
        SampledTradeoff::new(
            (0..n)
                .map(|i| self.beta(i as f64 / (n - 1) as f64))
                .collect(),
        )
    }

    /// `(alpha, beta)` pairs at `points` evenly spaced alphas.
    pub fn sample(&self, points: usize) -> Vec<(f64, f64)> {
        let n = points.max(2);
        (0..n)
            .map(|i| {
                let a = i as f64 / (n - 1) as f64;
                (a, self.beta(a))
            })
            .collect()
    }
}

pub fn gaussian_tradeoff(mu: f64, alpha: f64) -> f64 {
    if alpha <= 0.0 {
        return 1.0;
    }
    if alpha >= 1.0 {
        return 0.0;
    }
    // Phi^-1(1 - alpha) = -Phi^-1(alpha) keeps precision for small alpha
    norm_cdf(-norm_ppf(alpha) - mu)
}

/// Converts a (direction-wise worst) privacy profile into a symmetric curve.
///
/// `beta(alpha) = sup_eps max(0, 1 - delta(eps) - e^eps alpha, e^-eps (1 - delta(eps) - alpha))`
/// over the signed grid.
pub fn tradeoff_from_profile<F: Fn(f64) -> f64>(delta: F, grid: &ProfileGrid) -> TradeoffCurve {
    let lines = grid
        .values()
        .into_iter()
        .map(|eps| (eps.exp(), (-eps).exp(), 1.0 - delta(eps).clamp(0.0, 1.0)))
        .collect();
    TradeoffCurve::Profile(ProfileTradeoff { lines })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn perfect_privacy_is_diagonal() {
        let c = tradeoff_from_profile(|eps| if eps >= 0.0 { 0.0 } else { 1.0 - eps.exp() }, &ProfileGrid::default());
        for i in 0..=20 {
            let a = i as f64 / 20.0;
            assert!((c.beta(a) - (1.0 - a)).abs() < 1e-12);
        }
    }

    #[test]
    fn fully_distinguishable_is_zero() {
        let c = tradeoff_from_profile(|_| 1.0, &ProfileGrid::default());
        for i in 0..=20 {
            assert_eq!(c.beta(i as f64 / 20.0), 0.0);
        }
    }

    #[test]
    fn gaussian_endpoints() {
        assert_eq!(gaussian_tradeoff(1.0, 0.0), 1.0);
        assert_eq!(gaussian_tradeoff(1.0, 1.0), 0.0);
        assert!((gaussian_tradeoff(0.0, 0.3) - 0.7).abs() < 1e-12);
    }

    #[test]
    fn sampled_interpolates() {
        let s = TradeoffCurve::Gaussian { mu: 1.0 }.to_sampled(10_001);
        assert_eq!(s.beta(0.25), gaussian_tradeoff(1.0, 0.25));
        assert!((s.beta(0.250_05) - gaussian_tradeoff(1.0, 0.250_05)).abs() < 1e-8);
        assert_eq!(s.beta(0.0), 1.0);
        assert_eq!(s.beta(1.0), 0.0);
    }
}
