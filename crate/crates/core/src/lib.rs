//! Final-iterate auditing of DP-SGD.
//!
//! The crate is split along the pipeline:
//!
//! * [`mechanism`] simulates one-dimensional DP-SGD, either record by record
//!   or through a structured fast path for the all-zeros neighbouring pair.
//! * [`adversarial`] is the encoding gradient that runs a per-step likelihood
//!   ratio test and stores the running sum in the high digits of the iterate.
//! * [`accountant`] holds the privacy loss distribution machinery, noise
//!   calibration and trade-off curves (including the linear-loss mixture
//!   baseline).
//! * [`audit`] runs paired Monte Carlo trials, builds the observed ROC and
//!   turns it into an empirical epsilon.

pub mod accountant;
pub mod adversarial;
pub mod audit;
pub mod error;
pub mod export;
pub mod mechanism;
pub mod stats;

pub use error::{Error, Result};
