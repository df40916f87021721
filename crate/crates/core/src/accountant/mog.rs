//! Trade-off of the linear-loss hidden-state baseline:
//! `P = N(0, T s^2)` against `Q = sum_k Binom(T, q)(k) N(k, T s^2)`.

use serde::{Deserialize, Serialize};
use statrs::distribution::{Binomial, Discrete};

use crate::stats::{norm_cdf, norm_ppf};

use super::tradeoff::TradeoffCurve;

/// Binomial weights below this are dropped.
pub const WEIGHT_CUTOFF: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MogTradeoff {
    /// Standard deviation `s sqrt(T)` of both hypotheses.
    scale: f64,
    /// `(shift k, weight)` pairs of the alternative.
    components: Vec<(f64, f64)>,
}

impl MogTradeoff {
    pub fn new(noise_multiplier: f64, sampling_rate: f64, steps: usize) -> Self {
        let scale = noise_multiplier * (steps as f64).sqrt();
        let components = if sampling_rate >= 1.0 {
            vec![(steps as f64, 1.0)]
        } else {
            let binom = Binomial::new(sampling_rate, steps as u64).expect("rate in [0, 1)");
            (0..=steps as u64)
                .map(|k| (k as f64, binom.pmf(k)))
                .filter(|&(_, w)| w >= WEIGHT_CUTOFF)
                .collect()
        };
        Self { scale, components }
    }

    /// FNR of the threshold test with false positive rate `alpha`.
    fn one_sided(&self, alpha: f64) -> f64 {
        if alpha <= 0.0 {
            return self.components.iter().map(|c| c.1).sum();
        }
        if alpha >= 1.0 {
            return 0.0;
        }
        let tau = -self.scale * norm_ppf(alpha);
        self.mass_below(tau)
    }

    fn mass_below(&self, tau: f64) -> f64 {
        self.components
            .iter()
            .map(|&(k, w)| w * norm_cdf((tau - k) / self.scale))
            .sum()
    }

    /// Inverse of [`Self::one_sided`]: the alpha at which the FNR equals `beta`.
    fn one_sided_inverse(&self, beta: f64) -> f64 {
        if beta <= 0.0 {
            return 1.0;
        }
        let total: f64 = self.components.iter().map(|c| c.1).sum();
        if beta >= total {
            return 0.0;
        }
        let k_max = self.components.last().map_or(0.0, |c| c.0);
        let (mut lo, mut hi) = (-40.0 * self.scale, k_max + 40.0 * self.scale);
        for _ in 0..200 {
            let mid = 0.5 * (lo + hi);
            if self.mass_below(mid) < beta {
                lo = mid;
            } else {
                hi = mid;
            }
            if hi - lo <= 1e-15 * self.scale.max(hi.abs()) {
                break;
            }
        }
        norm_cdf(-0.5 * (lo + hi) / self.scale)
    }

    /// Symmetrised curve: pointwise minimum of the one-sided curve and its reflection.
    pub fn beta(&self, alpha: f64) -> f64 {
        let alpha = alpha.clamp(0.0, 1.0);
        self.one_sided(alpha).min(self.one_sided_inverse(alpha))
    }
}

pub fn mog_tradeoff(noise_multiplier: f64, sampling_rate: f64, steps: usize) -> TradeoffCurve {
    TradeoffCurve::Mog(MogTradeoff::new(noise_multiplier, sampling_rate, steps))
}
