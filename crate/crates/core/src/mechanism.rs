//! One-dimensional DP-SGD.
//!
//! Two simulators share the same update rule
//! `theta <- theta - lr * (sum of clipped per-record gradients + N(0, C^2 sigma^2))`
//! with Poisson subsampling:
//!
//! * [`run_dpsgd_explicit`] walks every record and samples it individually.
//! * [`run_dpsgd_structured`] exploits that the worst-case datasets contain
//!   only zeros plus at most one target record, so a step only needs the
//!   number of sampled zeros and whether the target was drawn. Work is
//!   `O(T)` regardless of the dataset size.
//!
//! All randomness goes through [`StepDraws`], which lets tests drive both
//! simulators from one shared stream of primitive draws.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Binomial, Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Largest iterate magnitude for which multiples of the encoding base stay exact.
pub const MAX_ITERATE_MAGNITUDE: f64 = (1u64 << 40) as f64;

/// DP-SGD knobs.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HyperParams {
    pub learning_rate: f64,
    pub clip_norm: f64,
    pub noise_multiplier: f64,
    pub sampling_rate: f64,
    pub steps: usize,
    /// Expected batch size `q * |D|` of the smaller neighbour, shared by both worlds.
    pub expected_batch: f64,
}

impl HyperParams {
    /// Learning rate and clip norm default to 1.
    pub fn new(
        noise_multiplier: f64,
        sampling_rate: f64,
        steps: usize,
        expected_batch: f64,
    ) -> Result<Self> {
        let hp = Self {
            learning_rate: 1.0,
            clip_norm: 1.0,
            noise_multiplier,
            sampling_rate,
            steps,
            expected_batch,
        };
        hp.validate()?;
        Ok(hp)
    }

    pub fn with_learning_rate(mut self, learning_rate: f64) -> Result<Self> {
        self.learning_rate = learning_rate;
        self.validate()?;
        Ok(self)
    }

    pub fn with_clip_norm(mut self, clip_norm: f64) -> Result<Self> {
        self.clip_norm = clip_norm;
        self.validate()?;
        Ok(self)
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::InvalidConfig(msg));
        if !(self.learning_rate.is_finite() && self.learning_rate > 0.0) {
            return bad(format!("learning rate must be positive, got {}", self.learning_rate));
        }
        if !(self.clip_norm.is_finite() && self.clip_norm > 0.0) {
            return bad(format!("clip norm must be positive, got {}", self.clip_norm));
        }
        if !(self.noise_multiplier.is_finite() && self.noise_multiplier > 0.0) {
            return bad(format!(
                "noise multiplier must be positive, got {}",
                self.noise_multiplier
            ));
        }
        if !(self.sampling_rate > 0.0 && self.sampling_rate <= 1.0) {
            return bad(format!(
                "sampling rate must lie in (0, 1], got {}",
                self.sampling_rate
            ));
        }
        if !(self.expected_batch.is_finite() && self.expected_batch > 0.0) {
            return bad(format!(
                "expected batch must be positive, got {}",
                self.expected_batch
            ));
        }
        Ok(())
    }

    /// Standard deviation of the per-step noise added to the iterate.
    pub fn step_noise_std(&self) -> f64 {
        self.learning_rate * self.clip_norm * self.noise_multiplier
    }
}

/// `D = {0, ..., 0}` (`num_zeros` records) or `D' = D + {1}`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct WorstCaseDataset {
    pub num_zeros: u64,
    pub contains_target: bool,
}

impl WorstCaseDataset {
    pub const TARGET_VALUE: f64 = 1.0;

    pub fn new(num_zeros: u64, contains_target: bool) -> Self {
        Self {
            num_zeros,
            contains_target,
        }
    }

    pub fn len(&self) -> u64 {
        self.num_zeros + u64::from(self.contains_target)
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Materialises the records (zeros first, target last). Only sensible for
    /// small datasets.
    pub fn materialize(&self) -> Vec<f64> {
        let mut records = vec![0.0; self.num_zeros as usize];
        if self.contains_target {
            records.push(Self::TARGET_VALUE);
        }
        records
    }
}

/// Iterates `theta_0 ..= theta_T`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Trajectory {
    iterates: Vec<f64>,
}

impl Trajectory {
    pub fn iterates(&self) -> &[f64] {
        &self.iterates
    }

    pub fn final_iterate(&self) -> f64 {
        *self.iterates.last().expect("trajectory holds theta_0")
    }

    pub fn steps(&self) -> usize {
        self.iterates.len() - 1
    }
}

/// Result of one simulated training run.
#[derive(Debug, Clone, PartialEq)]
pub struct SimulationOutput {
    pub final_iterate: f64,
    /// Present when the caller asked for the full trajectory.
    pub trajectory: Option<Trajectory>,
    /// Largest clipped per-record gradient magnitude seen over the run.
    pub max_contribution: f64,
}

/// Per-record gradient `g(record, theta)`.
pub trait GradientFn {
    fn gradient(&self, record: f64, theta: f64) -> Result<f64>;
}

impl<F: Fn(f64, f64) -> f64> GradientFn for F {
    fn gradient(&self, record: f64, theta: f64) -> Result<f64> {
        Ok(self(record, theta))
    }
}

/// Source of the primitive random draws made by the simulators.
pub trait StepDraws {
    /// Poisson subsampling: inclusion flag for every record.
    fn include(&mut self, step: usize, records: &[f64], rate: f64) -> Vec<bool>;
    /// Number of zero records sampled out of `num_zeros`.
    fn zero_count(&mut self, step: usize, num_zeros: u64, rate: f64) -> u64;
    /// Whether the target record was sampled.
    fn target_included(&mut self, step: usize, rate: f64) -> bool;
    /// A standard normal variate for the step noise.
    fn standard_normal(&mut self, step: usize) -> f64;
}

/// ChaCha8-backed draws, reproducible from a seed and stream index.
#[derive(Debug, Clone)]
pub struct SeededDraws {
    rng: ChaCha8Rng,
}

impl SeededDraws {
    pub fn new(seed: u64) -> Self {
        Self::with_stream(seed, 0)
    }

    /// Independent stream `stream` under the same master seed.
    pub fn with_stream(seed: u64, stream: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(stream);
        Self { rng }
    }
}

impl StepDraws for SeededDraws {
    fn include(&mut self, _step: usize, records: &[f64], rate: f64) -> Vec<bool> {
        records
            .iter()
            .map(|_| self.rng.random::<f64>() < rate)
            .collect()
    }

    fn zero_count(&mut self, _step: usize, num_zeros: u64, rate: f64) -> u64 {
        if rate >= 1.0 {
            return num_zeros;
        }
        Binomial::new(num_zeros, rate)
            .expect("rate validated in (0, 1)")
            .sample(&mut self.rng)
    }

    fn target_included(&mut self, _step: usize, rate: f64) -> bool {
        self.rng.random::<f64>() < rate
    }

    fn standard_normal(&mut self, _step: usize) -> f64 {
        StandardNormal.sample(&mut self.rng)
    }
}

/// The primitive draws of one step of the structured simulator.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StepRecord {
    pub zeros: u64,
    pub target: bool,
    pub noise: f64,
}

/// Replays recorded [`StepRecord`]s.
///
/// `include` selects the first `zeros` zero-valued records and every
/// non-zero record iff `target`, which reproduces a structured step on a
/// materialised worst-case dataset.
#[derive(Debug, Clone)]
pub struct ScriptedDraws {
    script: Vec<StepRecord>,
}

impl ScriptedDraws {
    pub fn new(script: Vec<StepRecord>) -> Self {
        Self { script }
    }

    fn at(&self, step: usize) -> StepRecord {
        self.script[step]
    }
}

impl StepDraws for ScriptedDraws {
    fn include(&mut self, step: usize, records: &[f64], _rate: f64) -> Vec<bool> {
        let rec = self.at(step);
        let mut zeros_left = rec.zeros;
        records
            .iter()
            .map(|&x| {
                if x == 0.0 {
                    let take = zeros_left > 0;
                    zeros_left = zeros_left.saturating_sub(1);
                    take
                } else {
                    rec.target
                }
            })
            .collect()
    }

    fn zero_count(&mut self, step: usize, _num_zeros: u64, _rate: f64) -> u64 {
        self.at(step).zeros
    }

    fn target_included(&mut self, step: usize, _rate: f64) -> bool {
        self.at(step).target
    }

    fn standard_normal(&mut self, step: usize) -> f64 {
        self.at(step).noise
    }
}

/// Wraps another draw source and records what the structured simulator used.
#[derive(Debug)]
pub struct RecordingDraws<D> {
    inner: D,
    records: Vec<StepRecord>,
}

impl<D: StepDraws> RecordingDraws<D> {
    pub fn new(inner: D) -> Self {
        Self {
            inner,
            records: Vec::new(),
        }
    }

    pub fn into_script(self) -> Vec<StepRecord> {
        self.records
    }

    fn slot(&mut self, step: usize) -> &mut StepRecord {
        while self.records.len() <= step {
            self.records.push(StepRecord {
                zeros: 0,
                target: false,
                noise: 0.0,
            });
        }
        &mut self.records[step]
    }
}

impl<D: StepDraws> StepDraws for RecordingDraws<D> {
    fn include(&mut self, step: usize, records: &[f64], rate: f64) -> Vec<bool> {
        self.inner.include(step, records, rate)
    }

    fn zero_count(&mut self, step: usize, num_zeros: u64, rate: f64) -> u64 {
        let zeros = self.inner.zero_count(step, num_zeros, rate);
        self.slot(step).zeros = zeros;
        zeros
    }

    fn target_included(&mut self, step: usize, rate: f64) -> bool {
        let target = self.inner.target_included(step, rate);
        self.slot(step).target = target;
        target
    }

    fn standard_normal(&mut self, step: usize) -> f64 {
        let noise = self.inner.standard_normal(step);
        self.slot(step).noise = noise;
        noise
    }
}

fn clip(g: f64, clip_norm: f64) -> f64 {
    g.clamp(-clip_norm, clip_norm)
}

fn check_iterate(step: usize, theta: f64) -> Result<()> {
    if !theta.is_finite() {
        return Err(Error::NonFiniteIterate { step });
    }
    if theta.abs() >= MAX_ITERATE_MAGNITUDE {
        return Err(Error::IterateOutOfRange { step, value: theta });
    }
    Ok(())
}

/// Initial parameter; the adversarial gradient treats an exact zero as "first step".
pub const INITIAL_ITERATE: f64 = 0.0;

/// Record-by-record DP-SGD seeded by `seed`.
pub fn run_dpsgd_explicit<G: GradientFn + ?Sized>(
    records: &[f64],
    gradient: &G,
    hp: &HyperParams,
    seed: u64,
    keep_trajectory: bool,
) -> Result<SimulationOutput> {
    run_dpsgd_explicit_with(
        records,
        gradient,
        hp,
        &mut SeededDraws::new(seed),
        keep_trajectory,
    )
}

/// Record-by-record DP-SGD driven by an arbitrary draw source.
pub fn run_dpsgd_explicit_with<G: GradientFn + ?Sized, D: StepDraws + ?Sized>(
    records: &[f64],
    gradient: &G,
    hp: &HyperParams,
    draws: &mut D,
    keep_trajectory: bool,
) -> Result<SimulationOutput> {
    hp.validate()?;
    if let Some(bad) = records.iter().find(|x| !x.is_finite()) {
        return Err(Error::InvalidConfig(format!("non-finite record {bad}")));
    }
    let mut theta = INITIAL_ITERATE;
    let mut iterates = keep_trajectory.then(|| {
        let mut v = Vec::with_capacity(hp.steps + 1);
        v.push(theta);
        v
    });
    let mut max_contribution = 0.0f64;
    for step in 0..hp.steps {
        let included = draws.include(step, records, hp.sampling_rate);
        let mut sum = 0.0;
        for (&x, _) in records.iter().zip(&included).filter(|(_, &inc)| inc) {
            let g = clip(gradient.gradient(x, theta)?, hp.clip_norm);
            max_contribution = max_contribution.max(g.abs());
            sum += g;
        }
        let noise = hp.clip_norm * hp.noise_multiplier * draws.standard_normal(step);
        theta -= hp.learning_rate * (sum + noise);
        check_iterate(step + 1, theta)?;
        if let Some(it) = iterates.as_mut() {
            it.push(theta);
        }
    }
    Ok(SimulationOutput {
        final_iterate: theta,
        trajectory: iterates.map(|iterates| Trajectory { iterates }),
        max_contribution,
    })
}

/// Structured DP-SGD on a worst-case dataset; returns the final iterate.
///
/// Per step this draws the number of sampled zeros and the target inclusion,
/// then applies that many copies of the (clipped) zero-record and target
/// gradients plus Gaussian noise. Rejects zero-record gradients at or above
/// the clip norm, since the encoding would be clipped.
pub fn run_dpsgd_structured<G: GradientFn + ?Sized>(
    ds: &WorstCaseDataset,
    gradient: &G,
    hp: &HyperParams,
    seed: u64,
) -> Result<f64> {
    run_dpsgd_structured_with(ds, gradient, hp, &mut SeededDraws::new(seed))
}

pub fn run_dpsgd_structured_with<G: GradientFn + ?Sized, D: StepDraws + ?Sized>(
    ds: &WorstCaseDataset,
    gradient: &G,
    hp: &HyperParams,
    draws: &mut D,
) -> Result<f64> {
    structured(ds, gradient, hp, draws, None)
}

/// Structured DP-SGD keeping every iterate.
pub fn run_dpsgd_structured_traced<G: GradientFn + ?Sized, D: StepDraws + ?Sized>(
    ds: &WorstCaseDataset,
    gradient: &G,
    hp: &HyperParams,
    draws: &mut D,
) -> Result<Trajectory> {
    let mut iterates = Vec::with_capacity(hp.steps + 1);
    iterates.push(INITIAL_ITERATE);
    structured(ds, gradient, hp, draws, Some(&mut iterates))?;
    Ok(Trajectory { iterates })
}

fn structured<G: GradientFn + ?Sized, D: StepDraws + ?Sized>(
    ds: &WorstCaseDataset,
    gradient: &G,
    hp: &HyperParams,
    draws: &mut D,
    mut trace: Option<&mut Vec<f64>>,
) -> Result<f64> {
    hp.validate()?;
    let mut theta = INITIAL_ITERATE;
    for step in 0..hp.steps {
        let mut sum = 0.0;
        if ds.num_zeros > 0 {
            let sampled = draws.zero_count(step, ds.num_zeros, hp.sampling_rate);
            let g0 = gradient.gradient(0.0, theta).map_err(|e| match e {
                Error::EncodingClipped {
                    gradient, clip_norm, ..
                } => Error::EncodingClipped {
                    step,
                    gradient,
                    clip_norm,
                },
                e => e,
            })?;
            if g0.abs() >= hp.clip_norm {
                return Err(Error::EncodingClipped {
                    step,
                    gradient: g0,
                    clip_norm: hp.clip_norm,
                });
            }
            sum += sampled as f64 * g0;
        }
        if ds.contains_target && draws.target_included(step, hp.sampling_rate) {
            sum += clip(
                gradient.gradient(WorstCaseDataset::TARGET_VALUE, theta)?,
                hp.clip_norm,
            );
        }
        let noise = hp.clip_norm * hp.noise_multiplier * draws.standard_normal(step);
        theta -= hp.learning_rate * (sum + noise);
        check_iterate(step + 1, theta)?;
        if let Some(t) = trace.as_deref_mut() {
            t.push(theta);
        }
    }
    Ok(theta)
}
