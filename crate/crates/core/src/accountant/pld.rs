//! Discretised privacy loss distributions for the Poisson-subsampled Gaussian
//! mechanism and their self-composition.

use rustfft::num_complex::Complex;
use rustfft::FftPlanner;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::stats::{gaussian_interval, norm_ppf};

/// Which neighbour plays the numerator of the privacy loss.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Adjacency {
    /// Loss of `N(0, s^2)` against the subsampled mixture (record added).
    Add,
    /// Loss of the mixture `q N(1, s^2) + (1 - q) N(0, s^2)` against `N(0, s^2)` (record removed).
    Remove,
}

impl Adjacency {
    pub const BOTH: [Adjacency; 2] = [Adjacency::Add, Adjacency::Remove];
}

/// Discretisation knobs.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PldOptions {
    pub grid_spacing: f64,
    /// Probability mass allowed outside the one-step discretisation range.
    pub tail_truncation: f64,
    /// Mass allowed outside the window kept by each composition.
    pub composed_tail_truncation: f64,
    /// Upper bound on any grid or FFT length.
    pub max_grid_len: usize,
}

impl Default for PldOptions {
    fn default() -> Self {
        Self {
            grid_spacing: 1e-4,
            tail_truncation: 1e-12,
            composed_tail_truncation: 1e-15,
            max_grid_len: 1 << 23,
        }
    }
}

impl PldOptions {
    pub fn with_grid_spacing(mut self, grid_spacing: f64) -> Self {
        self.grid_spacing = grid_spacing;
        self
    }
}

/// Privacy loss mass function on the grid `(lower_index + i) * grid_spacing`,
/// plus an atom at `+inf`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PrivacyLossDistribution {
    grid_spacing: f64,
    lower_index: i64,
    masses: Vec<f64>,
    infinity_mass: f64,
}

/// Monotone privacy loss of the subsampled Gaussian in one direction.
struct SubsampledGaussian {
    q: f64,
    sigma: f64,
    adjacency: Adjacency,
}

impl SubsampledGaussian {
    /// `ln(mixture / N(0))` at `x`, increasing in `x`.
    fn mixture_log_ratio(&self, x: f64) -> f64 {
        let a = (2.0 * x - 1.0) / (2.0 * self.sigma * self.sigma);
        let q = self.q;
        if q >= 1.0 {
            a
        } else if a > 0.0 {
            a + q.ln() + ((1.0 - q) / q * (-a).exp()).ln_1p()
        } else {
            (q * a.exp_m1()).ln_1p()
        }
    }

    /// Inverse of [`Self::mixture_log_ratio`]; `-inf` below its range.
    fn mixture_log_ratio_inverse(&self, l: f64) -> f64 {
        let inner = l.exp_m1() + self.q;
        if inner <= 0.0 {
            return f64::NEG_INFINITY;
        }
        if l == f64::INFINITY {
            return f64::INFINITY;
        }
        self.sigma * self.sigma * (inner.ln() - self.q.ln()) + 0.5
    }

    fn loss(&self, x: f64) -> f64 {
        match self.adjacency {
            Adjacency::Remove => self.mixture_log_ratio(x),
            Adjacency::Add => -self.mixture_log_ratio(x),
        }
    }

    /// Outcome at which the loss equals `l` (monotone in `l`).
    fn outcome_at(&self, l: f64) -> f64 {
        match self.adjacency {
            Adjacency::Remove => self.mixture_log_ratio_inverse(l),
            Adjacency::Add => self.mixture_log_ratio_inverse(-l),
        }
    }

    fn null_mass(&self, lo: f64, hi: f64) -> f64 {
        gaussian_interval(0.0, self.sigma, lo, hi)
    }

    fn mixture_mass(&self, lo: f64, hi: f64) -> f64 {
        let shifted = gaussian_interval(1.0, self.sigma, lo, hi);
        if self.q >= 1.0 {
            shifted
        } else {
            self.q * shifted + (1.0 - self.q) * self.null_mass(lo, hi)
        }
    }

    /// `(P_A, P_B)` of the outcome interval `(lo, hi]`, where `A` is the
    /// numerator distribution of the loss.
    fn masses(&self, lo: f64, hi: f64) -> (f64, f64) {
        match self.adjacency {
            Adjacency::Remove => (self.mixture_mass(lo, hi), self.null_mass(lo, hi)),
            Adjacency::Add => (self.null_mass(lo, hi), self.mixture_mass(lo, hi)),
        }
    }

    /// `(P_A, P_B)` of the event `{loss in (la, lb]}`.
    fn loss_interval(&self, la: f64, lb: f64) -> (f64, f64) {
        self.between_outcomes(self.outcome_at(la), self.outcome_at(lb))
    }

    /// Same as [`Self::loss_interval`] given the outcomes at both loss values.
    fn between_outcomes(&self, xa: f64, xb: f64) -> (f64, f64) {
        match self.adjacency {
            Adjacency::Remove => self.masses(xa, xb),
            Adjacency::Add => self.masses(xb, xa),
        }
    }

    /// Outcome range carrying all but `tail` of the numerator's mass.
    fn outcome_range(&self, tail: f64) -> (f64, f64) {
        let z = -norm_ppf(tail / 4.0);
        (-z * self.sigma, 1.0 + z * self.sigma)
    }
}

impl PrivacyLossDistribution {
    /// Builds a distribution from raw parts, checking normalisation.
    pub fn from_parts(
        grid_spacing: f64,
        lower_index: i64,
        masses: Vec<f64>,
        infinity_mass: f64,
    ) -> Result<Self> {
        if !(grid_spacing > 0.0 && grid_spacing.is_finite()) {
            return Err(Error::InvalidConfig(format!(
                "grid spacing must be positive, got {grid_spacing}"
            )));
        }
        if masses.iter().any(|m| !(*m >= 0.0)) || !(0.0..=1.0).contains(&infinity_mass) {
            return Err(Error::InvalidConfig("masses must be non-negative".into()));
        }
        let total = masses.iter().sum::<f64>() + infinity_mass;
        if (total - 1.0).abs() > 1e-9 {
            return Err(Error::InvalidConfig(format!(
                "masses sum to {total}, expected 1"
            )));
        }
        Ok(Self {
            grid_spacing,
            lower_index,
            masses,
            infinity_mass,
        })
    }

    /// One step of the Poisson-subsampled Gaussian mechanism with sensitivity 1.
    ///
    /// Mass is assigned with connect-the-dots: each loss bucket's mass is split
    /// between its two grid endpoints so that both neighbours' masses are
    /// preserved. The discrete hockey-stick curve then interpolates the exact
    /// one at every grid point and upper-bounds it in between. Mass above the
    /// range becomes the `+inf` atom, mass below is moved up to the lowest
    /// grid point; both are pessimistic.
    pub fn subsampled_gaussian(
        sampling_rate: f64,
        noise_multiplier: f64,
        adjacency: Adjacency,
        opts: &PldOptions,
    ) -> Result<Self> {
        let dx = opts.grid_spacing;
        if !(dx > 0.0 && dx.is_finite()) {
            return Err(Error::InvalidConfig(format!(
                "grid spacing must be positive, got {dx}"
            )));
        }
        if !(sampling_rate > 0.0 && sampling_rate <= 1.0) {
            return Err(Error::InvalidConfig(format!(
                "sampling rate must lie in (0, 1], got {sampling_rate}"
            )));
        }
        if !(noise_multiplier > 0.0 && noise_multiplier.is_finite()) {
            return Err(Error::InvalidConfig(format!(
                "noise multiplier must be positive, got {noise_multiplier}"
            )));
        }
        let mech = SubsampledGaussian {
            q: sampling_rate,
            sigma: noise_multiplier,
            adjacency,
        };
        let (x_lo, x_hi) = mech.outcome_range(opts.tail_truncation);
        let (l_a, l_b) = (mech.loss(x_lo), mech.loss(x_hi));
        let (l_min, l_max) = (l_a.min(l_b), l_a.max(l_b));
        let lower_index = (l_min / dx).floor() as i64;
        let upper_index = (l_max / dx).ceil() as i64;
        let len = (upper_index - lower_index + 1) as usize;
        if len > opts.max_grid_len {
            return Err(Error::GridTooLarge {
                required: len,
                cap: opts.max_grid_len,
            });
        }
        let loss_at = |i: usize| (lower_index + i as i64) as f64 * dx;

        let mut masses = vec![0.0; len];
        let up_weight = 1.0 / dx.exp_m1();
        let decay = (-dx).exp();
        let outcomes: Vec<f64> = (0..len).map(|i| mech.outcome_at(loss_at(i))).collect();
        for j in 0..len - 1 {
            let (pa, pb) = mech.between_outcomes(outcomes[j], outcomes[j + 1]);
            if pa == 0.0 {
                continue;
            }
            if pb == 0.0 {
                masses[j + 1] += pa;
                continue;
            }
            // pa / (pb e^{l_j}) lies in [1, e^dx] for exact arithmetic
            let ratio = pa / (pb * loss_at(j).exp());
            let theta = ((ratio - 1.0) * up_weight).clamp(0.0, 1.0);
            let upper_share = theta / (theta + (1.0 - theta) * decay);
            masses[j + 1] += upper_share * pa;
            masses[j] += (1.0 - upper_share) * pa;
        }

        let top = loss_at(len - 1);
        let (pa_above, pb_above) = mech.loss_interval(top, f64::INFINITY);
        let infinity_mass = (pa_above - top.exp() * pb_above).max(0.0);
        masses[len - 1] += pa_above - infinity_mass;
        let (pa_below, _) = mech.loss_interval(f64::NEG_INFINITY, loss_at(0));
        masses[0] += pa_below;

        // absorb rounding so the total is exactly one
        let total: f64 = masses.iter().sum::<f64>() + infinity_mass;
        let scale = (1.0 - infinity_mass) / (total - infinity_mass);
        masses.iter_mut().for_each(|m| *m *= scale);

        Self::from_parts(dx, lower_index, masses, infinity_mass)
    }

    pub fn grid_spacing(&self) -> f64 {
        self.grid_spacing
    }

    pub fn lower_index(&self) -> i64 {
        self.lower_index
    }

    /// Loss value of the first mass.
    pub fn origin(&self) -> f64 {
        self.lower_index as f64 * self.grid_spacing
    }

    pub fn masses(&self) -> &[f64] {
        &self.masses
    }

    pub fn infinity_mass(&self) -> f64 {
        self.infinity_mass
    }

    pub fn loss_at(&self, i: usize) -> f64 {
        (self.lower_index + i as i64) as f64 * self.grid_spacing
    }

    pub fn len(&self) -> usize {
        self.masses.len()
    }

    pub fn is_empty(&self) -> bool {
        self.masses.is_empty()
    }

    /// `sum_i p_i l_i` over the finite part.
    pub fn mean(&self) -> f64 {
        self.masses
            .iter()
            .enumerate()
            .map(|(i, p)| p * self.loss_at(i))
            .sum()
    }

    /// Hockey-stick divergence `sum p_i max(0, 1 - e^{eps - l_i}) + p_inf`.
    pub fn delta_at(&self, epsilon: f64) -> f64 {
        let finite: f64 = self
            .masses
            .iter()
            .enumerate()
            .filter_map(|(i, &p)| {
                let l = self.loss_at(i);
                (l > epsilon).then(|| p * -(epsilon - l).exp_m1())
            })
            .sum();
        (finite + self.infinity_mass).clamp(0.0, 1.0)
    }

    /// Precomputed tail sums answering `delta_at` in `O(1)`.
    pub fn hockey_stick(&self) -> HockeyStick {
        HockeyStick::new(self)
    }

    /// `times`-fold self-composition.
    ///
    /// The composed mass function is the `times`-fold convolution, computed
    /// as one forward FFT, an element-wise power and one inverse FFT. The
    /// FFT window covers the range a Chernoff bound leaves with less than
    /// `composed_tail_truncation` outside; that mass (which would alias back
    /// into the window) is charged to the `+inf` atom.
    pub fn compose(&self, times: usize, opts: &PldOptions) -> Result<Self> {
        if times == 0 {
            return Err(Error::InvalidConfig("composition count must be >= 1".into()));
        }
        if times == 1 {
            return Ok(self.clone());
        }
        let n = self.masses.len();
        let finite: f64 = self.masses.iter().sum();
        let infinity_mass = 1.0 - (1.0 - self.infinity_mass).powf(times as f64);
        let span = (n - 1)
            .checked_mul(times)
            .ok_or(Error::GridTooLarge {
                required: usize::MAX,
                cap: opts.max_grid_len,
            })?;
        let (lo, hi) = self.chernoff_window(times, opts.composed_tail_truncation / 2.0, span);
        let width = hi - lo + 1;
        let fft_len = width.next_power_of_two();
        if fft_len > opts.max_grid_len {
            return Err(Error::GridTooLarge {
                required: fft_len,
                cap: opts.max_grid_len,
            });
        }

        let mut buf = vec![Complex::new(0.0, 0.0); fft_len];
        for (i, &p) in self.masses.iter().enumerate() {
            buf[i % fft_len].re += p;
        }
        let mut planner = FftPlanner::<f64>::new();
        planner.plan_fft_forward(fft_len).process(&mut buf);
        for c in buf.iter_mut() {
            *c = c.powu(times as u32);
        }
        planner.plan_fft_inverse(fft_len).process(&mut buf);
        let norm = 1.0 / fft_len as f64;
        let mut masses: Vec<f64> = (lo..=hi)
            .map(|s| (buf[s % fft_len].re * norm).max(0.0))
            .collect();

        // window truncation goes to +inf, which keeps delta pessimistic
        let kept: f64 = masses.iter().sum();
        let expected_finite = finite.powf(times as f64);
        let truncated = (expected_finite - kept).max(0.0) + opts.composed_tail_truncation;
        let infinity_mass = (infinity_mass + truncated).min(1.0);
        let scale = (1.0 - infinity_mass) / kept;
        if scale < 1.0 {
            masses.iter_mut().for_each(|m| *m *= scale);
        }
        trim_zeros(&mut masses, self.lower_index * times as i64 + lo as i64).map_or_else(
            || Self::from_parts(self.grid_spacing, 0, vec![0.0], 1.0),
            |(lower_index, masses)| {
                let total: f64 = masses.iter().sum();
                Ok(Self {
                    grid_spacing: self.grid_spacing,
                    lower_index,
                    masses,
                    infinity_mass: (1.0 - total).max(0.0),
                })
            },
        )
    }

    /// Offsets `[lo, hi]` (relative to `times * lower_index`) outside of
    /// which the composed mass is at most `2 * tail`.
    fn chernoff_window(&self, times: usize, tail: f64, span: usize) -> (usize, usize) {
        let total: f64 = self.masses.iter().sum();
        let mean = self
            .masses
            .iter()
            .enumerate()
            .map(|(i, p)| p * i as f64)
            .sum::<f64>()
            / total;
        let var = self
            .masses
            .iter()
            .enumerate()
            .map(|(i, p)| p * (i as f64 - mean).powi(2))
            .sum::<f64>()
            / total;
        let t = times as f64;
        if var <= 0.0 {
            let c = (mean * t).round().clamp(0.0, span as f64) as usize;
            return (c, c);
        }
        let scale = 1.0 / (t.sqrt() * var.sqrt());
        let log_tail = tail.ln();
        let log_mgf = |lambda: f64| {
            let max = self
                .masses
                .iter()
                .enumerate()
                .filter(|(_, &p)| p > 0.0)
                .map(|(i, _)| lambda * (i as f64 - mean))
                .fold(f64::NEG_INFINITY, f64::max);
            let sum: f64 = self
                .masses
                .iter()
                .enumerate()
                .filter(|(_, &p)| p > 0.0)
                .map(|(i, &p)| p / total * (lambda * (i as f64 - mean) - max).exp())
                .sum();
            max + sum.ln()
        };
        let bound = |sign: f64| {
            (0..48)
                .map(|k| 0.25 * 1.2f64.powi(k) * scale)
                .map(|lambda| (t * log_mgf(sign * lambda) - log_tail) / lambda)
                .fold(f64::INFINITY, f64::min)
        };
        let centre = mean * t;
        let hi = (centre + bound(1.0)).ceil().clamp(0.0, span as f64) as usize;
        let lo = (centre - bound(-1.0)).floor().clamp(0.0, span as f64) as usize;
        (lo, hi)
    }
}

fn trim_zeros(masses: &mut Vec<f64>, lower_index: i64) -> Option<(i64, Vec<f64>)> {
    let first = masses.iter().position(|&m| m > 0.0)?;
    let last = masses.iter().rposition(|&m| m > 0.0)?;
    masses.truncate(last + 1);
    let kept = masses.split_off(first);
    Some((lower_index + first as i64, kept))
}

/// Suffix sums of `p_i` and `p_i e^{-l_i}` for fast hockey-stick queries.
#[derive(Debug, Clone)]
pub struct HockeyStick {
    origin_index: i64,
    grid_spacing: f64,
    tail_mass: Vec<f64>,
    tail_weighted: Vec<f64>,
    infinity_mass: f64,
}

impl HockeyStick {
    fn new(pld: &PrivacyLossDistribution) -> Self {
        let n = pld.masses.len();
        let mut tail_mass = vec![0.0; n + 1];
        let mut tail_weighted = vec![0.0; n + 1];
        for i in (0..n).rev() {
            tail_mass[i] = tail_mass[i + 1] + pld.masses[i];
            tail_weighted[i] = tail_weighted[i + 1] + pld.masses[i] * (-pld.loss_at(i)).exp();
        }
        Self {
            origin_index: pld.lower_index,
            grid_spacing: pld.grid_spacing,
            tail_mass,
            tail_weighted,
            infinity_mass: pld.infinity_mass,
        }
    }

    pub fn delta(&self, epsilon: f64) -> f64 {
        let n = self.tail_mass.len() - 1;
        // first index whose loss is strictly above epsilon
        let raw = (epsilon / self.grid_spacing).floor() as i64 + 1 - self.origin_index;
        let mut k = raw.clamp(0, n as i64) as usize;
        while k > 0 && ((self.origin_index + k as i64 - 1) as f64 * self.grid_spacing) > epsilon {
            k -= 1;
        }
        while k < n && ((self.origin_index + k as i64) as f64 * self.grid_spacing) <= epsilon {
            k += 1;
        }
        let finite = self.tail_mass[k] - epsilon.exp() * self.tail_weighted[k];
        (finite.max(0.0) + self.infinity_mass).clamp(0.0, 1.0)
    }
}
