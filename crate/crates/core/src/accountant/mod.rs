//! Theoretical side of the audit.
//!
//! Privacy loss distributions for the Poisson-subsampled Gaussian, their
//! composition over `T` steps, hockey-stick queries, noise calibration, and
//! the trade-off curves the observed ROC is compared against.

mod calibrate;
mod mog;
mod pld;
mod tradeoff;

pub use calibrate::{
    calibrate_sigma, calibrate_sigma_near, dpsgd_delta, gaussian_delta, gaussian_mu_for, PrivacyProfile, ProfileRow,
    CALIBRATION_RTOL, SIGMA_RANGE,
};
pub use mog::{mog_tradeoff, MogTradeoff, WEIGHT_CUTOFF};
pub use pld::{Adjacency, HockeyStick, PldOptions, PrivacyLossDistribution};
pub use tradeoff::{
    gaussian_tradeoff, tradeoff_from_profile, ProfileGrid, ProfileTradeoff, SampledTradeoff,
    TradeoffCurve,
};

/// `times`-fold composition of a one-step distribution.
pub fn compose(
    pld: &PrivacyLossDistribution,
    times: usize,
    opts: &PldOptions,
) -> crate::Result<PrivacyLossDistribution> {
    pld.compose(times, opts)
}

/// One step of the subsampled Gaussian in the given direction.
pub fn pld_one_step(
    sampling_rate: f64,
    noise_multiplier: f64,
    adjacency: Adjacency,
    opts: &PldOptions,
) -> crate::Result<PrivacyLossDistribution> {
    PrivacyLossDistribution::subsampled_gaussian(sampling_rate, noise_multiplier, adjacency, opts)
}
