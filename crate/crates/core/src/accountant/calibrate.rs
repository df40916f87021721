//! DP-SGD privacy profiles and noise calibration.

use serde::Serialize;

use crate::error::{Error, Result};
use crate::stats::norm_cdf;

use super::pld::{Adjacency, HockeyStick, PldOptions, PrivacyLossDistribution};
use super::tradeoff::{tradeoff_from_profile, ProfileGrid, TradeoffCurve};

/// Search range for [`calibrate_sigma`].
pub const SIGMA_RANGE: (f64, f64) = (1e-2, 1e3);
/// Accepted relative shortfall of delta below the target.
pub const CALIBRATION_RTOL: f64 = 1e-3;

/// `delta(eps)` of `T` composed subsampled-Gaussian steps, per direction.
#[derive(Debug, Clone)]
pub struct PrivacyProfile {
    add: HockeyStick,
    remove: HockeyStick,
}

impl PrivacyProfile {
    pub fn dpsgd(
        noise_multiplier: f64,
        sampling_rate: f64,
        steps: usize,
        opts: &PldOptions,
    ) -> Result<Self> {
        let build = |adj| -> Result<HockeyStick> {
            let one = PrivacyLossDistribution::subsampled_gaussian(
                sampling_rate,
                noise_multiplier,
                adj,
                opts,
            )?;
            Ok(one.compose(steps.max(1), opts)?.hockey_stick())
        };
        #[cfg(feature = "parallel")]
        let (add, remove) = rayon::join(|| build(Adjacency::Add), || build(Adjacency::Remove));
        #[cfg(not(feature = "parallel"))]
        let (add, remove) = (build(Adjacency::Add), build(Adjacency::Remove));
        Ok(Self {
            add: add?,
            remove: remove?,
        })
    }

    pub fn delta(&self, epsilon: f64, adjacency: Adjacency) -> f64 {
        match adjacency {
            Adjacency::Add => self.add.delta(epsilon),
            Adjacency::Remove => self.remove.delta(epsilon),
        }
    }

    /// Worse of the two directions.
    pub fn worst_delta(&self, epsilon: f64) -> f64 {
        self.add.delta(epsilon).max(self.remove.delta(epsilon))
    }

    /// Symmetric trade-off curve implied by the worst-case profile.
    pub fn tradeoff(&self, grid: &ProfileGrid) -> TradeoffCurve {
        tradeoff_from_profile(|eps| self.worst_delta(eps), grid)
    }

    /// `(eps, delta_add, delta_remove)` rows.
    pub fn table(&self, epsilons: &[f64]) -> Vec<ProfileRow> {
        epsilons
            .iter()
            .map(|&epsilon| ProfileRow {
                epsilon,
                delta_add: self.add.delta(epsilon),
                delta_remove: self.remove.delta(epsilon),
            })
            .collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ProfileRow {
    pub epsilon: f64,
    pub delta_add: f64,
    pub delta_remove: f64,
}

/// Worst-case `delta(eps)` of DP-SGD with the given noise.
pub fn dpsgd_delta(
    epsilon: f64,
    noise_multiplier: f64,
    sampling_rate: f64,
    steps: usize,
    opts: &PldOptions,
) -> Result<f64> {
    Ok(PrivacyProfile::dpsgd(noise_multiplier, sampling_rate, steps, opts)?.worst_delta(epsilon))
}

/// `delta(eps)` of the Gaussian mechanism with effect size `mu`.
pub fn gaussian_delta(mu: f64, epsilon: f64) -> f64 {
    if mu <= 0.0 {
        return (-epsilon.exp_m1()).max(0.0);
    }
    let a = epsilon / mu;
    (norm_cdf(-a + mu / 2.0) - epsilon.exp() * norm_cdf(-a - mu / 2.0)).max(0.0)
}

/// Effect size `mu` at which the Gaussian mechanism has `delta(eps) = delta`.
pub fn gaussian_mu_for(epsilon: f64, delta: f64) -> f64 {
    let (mut lo, mut hi) = (0.0f64, 1.0f64);
    while gaussian_delta(hi, epsilon) < delta && hi < 1e4 {
        hi *= 2.0;
    }
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if gaussian_delta(mid, epsilon) < delta {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    0.5 * (lo + hi)
}

/// Starting point from the central-limit approximation
/// `mu = q sqrt(T (e^{1/s^2} - 1))`.
fn initial_sigma(epsilon: f64, delta: f64, sampling_rate: f64, steps: usize) -> f64 {
    let mu = gaussian_mu_for(epsilon, delta);
    let t = steps as f64;
    let guess = if sampling_rate >= 1.0 {
        t.sqrt() / mu
    } else {
        let ratio = mu / (sampling_rate * t.sqrt());
        1.0 / (ratio * ratio).ln_1p().sqrt()
    };
    guess.clamp(SIGMA_RANGE.0, SIGMA_RANGE.1)
}

/// Noise multiplier at which DP-SGD is `(eps, delta)`-DP, worst direction.
///
/// Brackets the root of `ln delta(sigma) - ln delta_target` around a
/// central-limit starting guess, then narrows it with a safeguarded
/// regula falsi (Illinois) until
/// `delta(sigma)` lies in `[delta_target (1 - 1e-3), delta_target]`.
pub fn calibrate_sigma(
    epsilon: f64,
    delta: f64,
    sampling_rate: f64,
    steps: usize,
    opts: &PldOptions,
) -> Result<f64> {
    check_target(epsilon, delta)?;
    let guess = initial_sigma(epsilon, delta, sampling_rate, steps);
    calibrate_from(epsilon, delta, sampling_rate, steps, opts, guess, 1.25)
}

/// [`calibrate_sigma`] started from a nearby solution, e.g. the noise
/// calibrated for a neighbouring epsilon. The bracket grows from 2% steps.
pub fn calibrate_sigma_near(
    epsilon: f64,
    delta: f64,
    sampling_rate: f64,
    steps: usize,
    opts: &PldOptions,
    guess: f64,
) -> Result<f64> {
    check_target(epsilon, delta)?;
    if !(guess > 0.0 && guess.is_finite()) {
        return Err(Error::InvalidConfig(format!("bad starting noise {guess}")));
    }
    let guess = guess.clamp(SIGMA_RANGE.0, SIGMA_RANGE.1);
    calibrate_from(epsilon, delta, sampling_rate, steps, opts, guess, 1.02)
}

fn check_target(epsilon: f64, delta: f64) -> Result<()> {
    if !(epsilon > 0.0 && epsilon.is_finite()) {
        return Err(Error::InvalidConfig(format!("epsilon must be positive, got {epsilon}")));
    }
    if !(delta > 0.0 && delta < 1.0) {
        return Err(Error::InvalidConfig(format!("delta must lie in (0, 1), got {delta}")));
    }
    Ok(())
}

fn calibrate_from(
    epsilon: f64,
    delta: f64,
    sampling_rate: f64,
    steps: usize,
    opts: &PldOptions,
    guess: f64,
    first_step: f64,
) -> Result<f64> {
    let bracket_err = || Error::CalibrationBracket {
        epsilon,
        delta,
        lower: SIGMA_RANGE.0,
        upper: SIGMA_RANGE.1,
    };
    let target = delta.ln();
    let accept_floor = (1.0 - CALIBRATION_RTOL).ln();
    // f(x) with x = ln sigma; f is decreasing in x
    let eval = |x: f64| -> Result<f64> {
        let d = dpsgd_delta(epsilon, x.exp(), sampling_rate, steps, opts)?;
        Ok(if d > 0.0 { d.ln() - target } else { f64::NEG_INFINITY })
    };
    let accepted = |f: f64| f <= 0.0 && f >= accept_floor;

    let (x_min, x_max) = (SIGMA_RANGE.0.ln(), SIGMA_RANGE.1.ln());
    let mut x = guess.ln();
    let mut f = eval(x)?;
    if accepted(f) {
        return Ok(x.exp());
    }
    let mut step = first_step.ln();
    let (mut xa, mut fa, mut xb, mut fb);
    if f > 0.0 {
        // too little noise
        loop {
            let next = (x + step).min(x_max);
            let fn_ = eval(next)?;
            if accepted(fn_) {
                return Ok(next.exp());
            }
            if fn_ < 0.0 {
                (xa, fa, xb, fb) = (x, f, next, fn_);
                break;
            }
            if next >= x_max {
                return Err(bracket_err());
            }
            (x, f) = (next, fn_);
            step = (step * 2.0).min(1.25f64.ln());
        }
    } else {
        loop {
            let next = (x - step).max(x_min);
            let fn_ = match eval(next) {
                Ok(v) => v,
                Err(Error::GridTooLarge { .. }) => return Err(bracket_err()),
                Err(e) => return Err(e),
            };
            if accepted(fn_) {
                return Ok(next.exp());
            }
            if fn_ > 0.0 {
                (xa, fa, xb, fb) = (next, fn_, x, f);
                break;
            }
            if next <= x_min {
                return Err(bracket_err());
            }
            (x, f) = (next, fn_);
            step = (step * 2.0).min(1.25f64.ln());
        }
    }

    // fa > 0 > fb
    let mut last_side = 0i8;
    for _ in 0..200 {
        let mid = if fa.is_finite() && fb.is_finite() {
            let m = xb - fb * (xb - xa) / (fb - fa);
            if m > xa && m < xb {
                m
            } else {
                0.5 * (xa + xb)
            }
        } else {
            0.5 * (xa + xb)
        };
        let fm = eval(mid)?;
        if accepted(fm) {
            return Ok(mid.exp());
        }
        if fm > 0.0 {
            (xa, fa) = (mid, fm);
            if last_side == 1 {
                fb *= 0.5;
            }
            last_side = 1;
        } else {
            (xb, fb) = (mid, fm);
            if last_side == -1 {
                fa *= 0.5;
            }
            last_side = -1;
        }
        if xb - xa < 1e-14 {
            return Ok(xb.exp());
        }
    }
    Ok(xb.exp())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn gaussian_mu_inverts_delta() {
        let mu = gaussian_mu_for(1.0, 1e-5);
        assert!((gaussian_delta(mu, 1.0) / 1e-5 - 1.0).abs() < 1e-9);
        assert_eq!(gaussian_delta(0.0, 0.5), 0.0);
    }

    #[test]
    fn rejects_bad_targets() {
        let opts = PldOptions::default();
        assert!(calibrate_sigma(0.0, 1e-5, 0.1, 10, &opts).is_err());
        assert!(calibrate_sigma(1.0, 0.0, 0.1, 10, &opts).is_err());
        assert!(calibrate_sigma(1.0, 1.0, 0.1, 10, &opts).is_err());
    }

    #[test]
    fn single_gaussian_step_calibrates_to_closed_form() {
        let opts = PldOptions::default();
        let sigma = calibrate_sigma(1.0, 1e-5, 1.0, 1, &opts).unwrap();
        let exact = 1.0 / gaussian_mu_for(1.0, 1e-5);
        assert!((sigma / exact - 1.0).abs() < 1e-3, "{sigma} vs {exact}");
        for guess in [0.2, exact * 1.01, 40.0] {
            let near = calibrate_sigma_near(1.0, 1e-5, 1.0, 1, &opts, guess).unwrap();
            assert!((near / exact - 1.0).abs() < 1e-3, "{near} from {guess}");
        }
    }
}
