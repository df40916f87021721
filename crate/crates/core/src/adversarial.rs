//! The encoding adversarial loss.
//!
//! Each step the gradient decodes the previous iterate into an encoded prefix
//! (the running log-likelihood-ratio sum, stored in multiples of a power of
//! ten `E`) and a residual `v` that carries the last step's data signal plus
//! noise. It scores `v` with the per-step likelihood ratio test, quantises the
//! score to two decimals, and returns a gradient that, summed over the
//! `N` expected zero records, replaces `v` with the encoded score. After
//! `T` steps the final iterate holds the whole trajectory's evidence.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::mechanism::{GradientFn, HyperParams};

/// Scores are quantised to this many decimal places before encoding.
pub const LR_DECIMALS: i32 = 2;
const LR_SCALE: f64 = 100.0;

/// Largest absolute per-step score that may be encoded.
pub const MAX_ENCODED_LLR: f64 = 1e6;

/// Base/precision constants of the encoding.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EncodingScheme {
    base: f64,
}

impl EncodingScheme {
    /// `base` must be a positive power of ten.
    pub fn new(base: f64) -> Result<Self> {
        let exp = base.log10().round();
        if !(base >= 1.0 && base.is_finite() && 10f64.powi(exp as i32) == base) {
            return Err(Error::InvalidConfig(format!(
                "encoding base must be a positive power of ten, got {base}"
            )));
        }
        Ok(Self { base })
    }

    /// Smallest power of ten `E` with `E / 2 >= 1 + 5 sigma`.
    pub fn for_noise(noise_multiplier: f64) -> Self {
        let needed = 2.0 * (1.0 + 5.0 * noise_multiplier);
        let mut base = 1.0;
        while base < needed {
            base *= 10.0;
        }
        Self { base }
    }

    pub fn base(&self) -> f64 {
        self.base
    }

    /// Factor between an encoded prefix and the log-likelihood-ratio sum it stores.
    pub fn extraction_scale(&self) -> f64 {
        LR_SCALE * self.base
    }

    /// Residuals must stay strictly inside this half-width to decode correctly.
    pub fn residual_half_width(&self) -> f64 {
        self.base / 2.0
    }
}

/// Same as [`EncodingScheme::for_noise`].
pub fn choose_scheme(noise_multiplier: f64) -> EncodingScheme {
    EncodingScheme::for_noise(noise_multiplier)
}

/// An iterate split into its encoded prefix and residual.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DecodeResult {
    pub prefix: f64,
    pub residual: f64,
}

/// Per-step log-likelihood ratio (natural log).
#[derive(Debug, Clone, Copy, PartialEq, PartialOrd, Serialize, Deserialize)]
pub struct LlrValue(pub f64);

impl LlrValue {
    pub fn value(self) -> f64 {
        self.0
    }
}

/// `ln(q * exp((2v - 1) / (2 sigma^2)) + 1 - q)`: log of the density ratio of
/// `q N(1, sigma^2) + (1 - q) N(0, sigma^2)` against `N(0, sigma^2)` at `v`.
pub fn step_log_lr(v: f64, sampling_rate: f64, noise_multiplier: f64) -> Result<LlrValue> {
    if !v.is_finite() {
        return Err(Error::NonFiniteInput(v));
    }
    let q = sampling_rate;
    if q <= 0.0 {
        return Ok(LlrValue(0.0));
    }
    let a = (2.0 * v - 1.0) / (2.0 * noise_multiplier * noise_multiplier);
    let llr = if q >= 1.0 {
        a
    } else if a > 0.0 {
        a + q.ln() + ((1.0 - q) / q * (-a).exp()).ln_1p()
    } else {
        (q * a.exp_m1()).ln_1p()
    };
    Ok(LlrValue(llr))
}

/// `round(L * 100) * E`, rounding half away from zero.
pub fn encode(llr: LlrValue, scheme: &EncodingScheme) -> f64 {
    debug_assert!(llr.0.abs() <= MAX_ENCODED_LLR);
    (llr.0 * LR_SCALE).round() * scheme.base
}

/// Nearest multiple of `E` (ties to the even multiple) and the remainder.
pub fn decode(theta: f64, scheme: &EncodingScheme) -> DecodeResult {
    let prefix = (theta / scheme.base).round_ties_even() * scheme.base;
    DecodeResult {
        prefix,
        residual: theta - prefix,
    }
}

/// Score quantised to [`LR_DECIMALS`] decimal places.
pub fn quantize_llr(llr: LlrValue) -> f64 {
    (llr.0 * LR_SCALE).round() / LR_SCALE
}

/// Decoded running sum plus the quantised score of the final residual.
pub fn extract_llr_sum(
    theta: f64,
    scheme: &EncodingScheme,
    sampling_rate: f64,
    noise_multiplier: f64,
) -> Result<f64> {
    let DecodeResult { prefix, residual } = decode(theta, scheme);
    let last = step_log_lr(residual, sampling_rate, noise_multiplier)?;
    Ok(prefix / scheme.extraction_scale() + quantize_llr(last))
}

/// The adversarial per-record gradient with its global (non-sensitive) knobs.
///
/// Assumes unit learning rate and clip norm: the zero records must cancel the
/// residual exactly and the target must shift the residual by one.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AdversarialLoss {
    pub scheme: EncodingScheme,
    pub sampling_rate: f64,
    pub noise_multiplier: f64,
    pub expected_batch: f64,
    pub clip_norm: f64,
}

impl AdversarialLoss {
    /// Uses the default scheme for the noise multiplier.
    pub fn new(hp: &HyperParams) -> Result<Self> {
        Self::with_scheme(hp, EncodingScheme::for_noise(hp.noise_multiplier))
    }

    pub fn with_scheme(hp: &HyperParams, scheme: EncodingScheme) -> Result<Self> {
        hp.validate()?;
        if hp.learning_rate != 1.0 || hp.clip_norm != 1.0 {
            return Err(Error::InvalidConfig(format!(
                "adversarial loss needs learning rate 1 and clip norm 1, got {} and {}",
                hp.learning_rate, hp.clip_norm
            )));
        }
        Ok(Self {
            scheme,
            sampling_rate: hp.sampling_rate,
            noise_multiplier: hp.noise_multiplier,
            expected_batch: hp.expected_batch,
            clip_norm: hp.clip_norm,
        })
    }

    /// Gradient at record `x` given the previous iterate.
    ///
    /// Returns `-x` on the first step (`theta == 0`), otherwise
    /// `(v - encode(L(v))) / N - x`. The subtractive update then turns
    /// `prefix + v` into `prefix + encode(L(v))` plus the new step's signal
    /// and noise.
    pub fn adversarial_gradient(&self, x: f64, theta: f64) -> Result<f64> {
        if theta == 0.0 {
            return Ok(-x);
        }
        Ok(self.zero_record_gradient(theta)? - x)
    }

    fn zero_record_gradient(&self, theta: f64) -> Result<f64> {
        let DecodeResult { residual, .. } = decode(theta, &self.scheme);
        let llr = step_log_lr(residual, self.sampling_rate, self.noise_multiplier)?;
        if llr.0.abs() > MAX_ENCODED_LLR {
            return Err(Error::InvalidConfig(format!(
                "per-step log-likelihood ratio {} exceeds the encodable range",
                llr.0
            )));
        }
        let g = (residual - encode(llr, &self.scheme)) / self.expected_batch;
        if g.abs() >= self.clip_norm {
            return Err(Error::EncodingClipped {
                step: 0,
                gradient: g,
                clip_norm: self.clip_norm,
            });
        }
        Ok(g)
    }

    /// The observation the auditor computes from a released final iterate.
    pub fn extract_llr_sum(&self, theta: f64) -> Result<f64> {
        extract_llr_sum(theta, &self.scheme, self.sampling_rate, self.noise_multiplier)
    }
}

impl GradientFn for AdversarialLoss {
    fn gradient(&self, record: f64, theta: f64) -> Result<f64> {
        self.adversarial_gradient(record, theta)
    }
}
