//! Monte Carlo audit of the final iterate.
//!
//! Trials run the structured simulator with the adversarial loss on both
//! neighbouring datasets and record the extracted log-likelihood-ratio sum.
//! The observed ROC is compared against the trade-off curves the accountant
//! predicts for a grid of epsilons: the empirical epsilon is the first grid
//! value whose curve no interior ROC point falls below.

use std::collections::HashMap;
use std::sync::{Arc, Mutex};

#[cfg(feature = "parallel")]
use rayon::prelude::*;
use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::accountant::{
    calibrate_sigma, calibrate_sigma_near, mog_tradeoff, PldOptions, PrivacyProfile, ProfileGrid, SampledTradeoff,
};
use crate::adversarial::AdversarialLoss;
use crate::error::{Error, Result};
use crate::mechanism::{run_dpsgd_structured_with, HyperParams, SeededDraws, WorstCaseDataset};
use crate::stats::mean_std;

/// Points on the alpha grid used to interpolate predicted curves.
pub const CURVE_POINTS: usize = 10_001;
/// Float slack when comparing an observed FNR with a predicted one.
const COMPARE_EPS: f64 = 1e-12;
/// Keeps a predicted count sitting on a lattice point from rounding down.
const LATTICE_FUZZ: f64 = 1e-9;

/// Which neighbour a trial ran on.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum World {
    /// All zeros.
    #[serde(rename = "D")]
    D,
    /// All zeros plus the target record.
    #[serde(rename = "D'")]
    DPrime,
}

impl World {
    fn index(self) -> u64 {
        match self {
            World::D => 0,
            World::DPrime => 1,
        }
    }

    pub fn dataset(self, num_zeros: u64) -> WorstCaseDataset {
        WorstCaseDataset::new(num_zeros, self == World::DPrime)
    }
}

impl std::fmt::Display for World {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            World::D => "D",
            World::DPrime => "D'",
        })
    }
}

/// Strictly increasing candidate epsilons.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<f64>", into = "Vec<f64>")]
pub struct EpsilonGrid(Vec<f64>);

impl EpsilonGrid {
    pub fn new(values: Vec<f64>) -> Result<Self> {
        if values.is_empty() {
            return Err(Error::InvalidConfig("epsilon grid is empty".into()));
        }
        if values.windows(2).any(|w| !(w[1] > w[0])) || values.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidConfig(
                "epsilon grid must be finite and strictly increasing".into(),
            ));
        }
        Ok(Self(values))
    }

    /// `start, start + step, ..., stop` (inclusive), rounded to 1e-9.
    pub fn range(start: f64, stop: f64, step: f64) -> Result<Self> {
        if !(step > 0.0) || stop < start {
            return Err(Error::InvalidConfig(format!(
                "bad epsilon range {start}..{stop} step {step}"
            )));
        }
        let n = ((stop - start) / step + 1e-9).floor() as usize;
        Self::new(
            (0..=n)
                .map(|i| ((start + i as f64 * step) * 1e9).round() / 1e9)
                .collect(),
        )
    }

    pub fn values(&self) -> &[f64] {
        &self.0
    }
}

impl Default for EpsilonGrid {
    fn default() -> Self {
        Self::range(0.5, 20.0, 0.1).expect("static grid")
    }
}

impl TryFrom<Vec<f64>> for EpsilonGrid {
    type Error = Error;
    fn try_from(v: Vec<f64>) -> Result<Self> {
        Self::new(v)
    }
}

impl From<EpsilonGrid> for Vec<f64> {
    fn from(g: EpsilonGrid) -> Self {
        g.0
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AuditConfig {
    pub hp: HyperParams,
    pub num_zeros: u64,
    pub trials_per_world: usize,
    pub master_seed: u64,
    pub epsilon_grid: EpsilonGrid,
    pub runs: usize,
    pub delta: f64,
    /// Treat `D'` as the null world (reflects the observed curve).
    #[serde(default)]
    pub swap_worlds: bool,
    #[serde(default)]
    pub pld: PldOptions,
}

impl AuditConfig {
    /// Defaults: 5 runs, delta 1e-5, epsilon grid 0.5..=20 by 0.1, `N = q * num_zeros`.
    pub fn new(
        noise_multiplier: f64,
        sampling_rate: f64,
        steps: usize,
        num_zeros: u64,
        trials_per_world: usize,
        master_seed: u64,
    ) -> Result<Self> {
        let hp = HyperParams::new(
            noise_multiplier,
            sampling_rate,
            steps,
            sampling_rate * num_zeros as f64,
        )?;
        let cfg = Self {
            hp,
            num_zeros,
            trials_per_world,
            master_seed,
            epsilon_grid: EpsilonGrid::default(),
            runs: 5,
            delta: 1e-5,
            swap_worlds: false,
            pld: PldOptions::default(),
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        self.hp.validate()?;
        if self.trials_per_world < 100 {
            return Err(Error::InvalidConfig(format!(
                "need at least 100 trials per world, got {}",
                self.trials_per_world
            )));
        }
        if self.runs == 0 {
            return Err(Error::InvalidConfig("runs must be >= 1".into()));
        }
        if !(self.delta > 0.0 && self.delta < 1.0) {
            return Err(Error::InvalidConfig(format!(
                "delta must lie in (0, 1), got {}",
                self.delta
            )));
        }
        Ok(())
    }

    fn null_world(&self) -> World {
        if self.swap_worlds {
            World::DPrime
        } else {
            World::D
        }
    }

    fn alt_world(&self) -> World {
        if self.swap_worlds {
            World::D
        } else {
            World::DPrime
        }
    }

    /// Stream index of a trial: `(run * 2 + world) * R + trial`.
    pub fn stream(&self, run: usize, world: World, trial: usize) -> u64 {
        let r = self.trials_per_world as u64;
        (run as u64 * 2 + world.index()) * r + trial as u64
    }
}

/// Extracted log-likelihood-ratio sums of one world.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ObservationSet {
    pub world: World,
    pub values: Vec<f64>,
}

/// One trial: simulate on `world` with the given draw stream and extract the
/// observation from the final iterate.
pub fn observe_trial(
    hp: &HyperParams,
    loss: &AdversarialLoss,
    ds: &WorstCaseDataset,
    master_seed: u64,
    stream: u64,
) -> Result<f64> {
    let mut draws = SeededDraws::with_stream(master_seed, stream);
    let theta = run_dpsgd_structured_with(ds, loss, hp, &mut draws)?;
    loss.extract_llr_sum(theta)
}

fn observe_world(cfg: &AuditConfig, loss: &AdversarialLoss, run: usize, world: World) -> Result<ObservationSet> {
    let ds = world.dataset(cfg.num_zeros);
    let one = |trial: usize| {
        observe_trial(&cfg.hp, loss, &ds, cfg.master_seed, cfg.stream(run, world, trial)).map_err(
            |e| Error::Trial {
                world: world.to_string(),
                trial,
                source: Box::new(e),
            },
        )
    };
    #[cfg(feature = "parallel")]
    let values = (0..cfg.trials_per_world)
        .into_par_iter()
        .map(one)
        .collect::<Result<Vec<_>>>()?;
    #[cfg(not(feature = "parallel"))]
    let values = (0..cfg.trials_per_world).map(one).collect::<Result<Vec<_>>>()?;
    Ok(ObservationSet { world, values })
}

/// Observations for run `run`: `(null world, alternative world)`.
pub fn run_trials(cfg: &AuditConfig, run: usize) -> Result<(ObservationSet, ObservationSet)> {
    cfg.validate()?;
    let loss = AdversarialLoss::new(&cfg.hp)?;
    let null = observe_world(cfg, &loss, run, cfg.null_world())?;
    let alt = observe_world(cfg, &loss, run, cfg.alt_world())?;
    Ok((null, alt))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RocPoint {
    pub alpha: f64,
    pub beta: f64,
    pub threshold: f64,
}

/// Observed FPR/FNR pairs, ordered by increasing threshold.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RocCurve {
    pub points: Vec<RocPoint>,
    /// `|O'|`, the denominator of every FNR.
    pub alt_size: usize,
}

impl RocCurve {
    /// Smallest observed FNR among thresholds with FPR at most `alpha`.
    pub fn fnr_at(&self, alpha: f64) -> f64 {
        self.points
            .iter()
            .filter(|p| p.alpha <= alpha)
            .map(|p| p.beta)
            .fold(1.0, f64::min)
    }

    /// Points with `0 < alpha < 1`.
    pub fn interior(&self) -> impl Iterator<Item = &RocPoint> {
        self.points.iter().filter(|p| p.alpha > 0.0 && p.alpha < 1.0)
    }

    /// The last point (in threshold order) of each run of equal FPRs.
    pub fn per_alpha(&self) -> impl Iterator<Item = &RocPoint> {
        let next = self.points.iter().skip(1).map(Some).chain(std::iter::once(None));
        self.points
            .iter()
            .zip(next)
            .filter(|(p, q)| q.is_none_or(|q| q.alpha != p.alpha))
            .map(|(p, _)| p)
    }
}

/// Thresholds at every observed value: `alpha = |{o in O : o >= t}| / |O|`,
/// `beta = |{o in O' : o < t}| / |O'|`.
pub fn roc_from_observations(null: &[f64], alt: &[f64]) -> Result<RocCurve> {
    if null.is_empty() || alt.is_empty() {
        return Err(Error::InvalidConfig("observation sets must be non-empty".into()));
    }
    let sorted = |v: &[f64]| {
        let mut s = v.to_vec();
        s.sort_by(f64::total_cmp);
        s
    };
    let (o, o2) = (sorted(null), sorted(alt));
    let mut thresholds: Vec<f64> = o.iter().chain(&o2).copied().collect();
    thresholds.sort_by(f64::total_cmp);
    thresholds.dedup();
    let (n, n2) = (o.len() as f64, o2.len() as f64);
    let points = thresholds
        .into_iter()
        .map(|t| {
            let at_or_above = o.len() - o.partition_point(|&x| x < t);
            let below = o2.partition_point(|&x| x < t);
            RocPoint {
                alpha: at_or_above as f64 / n,
                beta: below as f64 / n2,
                threshold: t,
            }
        })
        .collect();
    Ok(RocCurve {
        points,
        alt_size: o2.len(),
    })
}

/// Empirical epsilon, or the marker that every grid value was violated.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum EpsilonEstimate {
    Value(f64),
    ExceedsGrid,
}

impl EpsilonEstimate {
    pub const SENTINEL: &'static str = "exceeds grid";

    pub fn value(self) -> Option<f64> {
        match self {
            EpsilonEstimate::Value(v) => Some(v),
            EpsilonEstimate::ExceedsGrid => None,
        }
    }
}

impl Serialize for EpsilonEstimate {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        match self {
            EpsilonEstimate::Value(v) => s.serialize_f64(*v),
            EpsilonEstimate::ExceedsGrid => s.serialize_str(Self::SENTINEL),
        }
    }
}

impl<'de> Deserialize<'de> for EpsilonEstimate {
    fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        #[derive(Deserialize)]
        #[serde(untagged)]
        enum Raw {
            Num(f64),
            Text(String),
        }
        match Raw::deserialize(d)? {
            Raw::Num(v) => Ok(EpsilonEstimate::Value(v)),
            Raw::Text(t) if t == Self::SENTINEL => Ok(EpsilonEstimate::ExceedsGrid),
            Raw::Text(t) => Err(serde::de::Error::custom(format!("unknown estimate {t:?}"))),
        }
    }
}

/// Predicted trade-off curve for one candidate epsilon.
#[derive(Debug, Clone)]
pub struct PredictedCurve {
    pub epsilon: f64,
    pub noise_multiplier: f64,
    pub curve: SampledTradeoff,
}

/// Source of predicted curves indexed by epsilon.
pub trait CurveFamily: Sync {
    fn curve(&self, epsilon: f64) -> Result<Arc<PredictedCurve>>;
}

type CachedCurve = std::result::Result<Arc<PredictedCurve>, Error>;

/// Curves of DP-SGD with composition, calibrated per epsilon and cached.
///
/// Grid values are calibrated in order, each starting from the noise found
/// for its predecessor, so a curve depends only on the grid and the
/// mechanism parameters and never on which curves were requested before.
pub struct PldCurveFamily {
    sampling_rate: f64,
    steps: usize,
    delta: f64,
    opts: PldOptions,
    grid: EpsilonGrid,
    profile_grid: ProfileGrid,
    points: usize,
    cache: Mutex<HashMap<u64, CachedCurve>>,
}

impl PldCurveFamily {
    pub fn new(sampling_rate: f64, steps: usize, delta: f64, opts: PldOptions, grid: EpsilonGrid) -> Self {
        Self {
            sampling_rate,
            steps,
            delta,
            opts,
            grid,
            profile_grid: ProfileGrid::default(),
            points: CURVE_POINTS,
            cache: Mutex::new(HashMap::new()),
        }
    }

    pub fn for_config(cfg: &AuditConfig) -> Self {
        Self::new(
            cfg.hp.sampling_rate,
            cfg.hp.steps,
            cfg.delta,
            cfg.pld,
            cfg.epsilon_grid.clone(),
        )
    }

    /// Whether this family predicts the curves `cfg` needs.
    pub fn matches(&self, cfg: &AuditConfig) -> bool {
        self.sampling_rate == cfg.hp.sampling_rate
            && self.steps == cfg.hp.steps
            && self.delta == cfg.delta
            && self.opts == cfg.pld
            && self.grid == cfg.epsilon_grid
    }

    fn compute(&self, epsilon: f64, warm: Option<f64>) -> CachedCurve {
        let (q, t, d, opts) = (self.sampling_rate, self.steps, self.delta, &self.opts);
        let sigma = match warm {
            Some(guess) => calibrate_sigma_near(epsilon, d, q, t, opts, guess)?,
            None => calibrate_sigma(epsilon, d, q, t, opts)?,
        };
        let profile = PrivacyProfile::dpsgd(sigma, q, t, opts)?;
        let curve = profile.tradeoff(&self.profile_grid).to_sampled(self.points);
        Ok(Arc::new(PredictedCurve {
            epsilon,
            noise_multiplier: sigma,
            curve,
        }))
    }

    fn cached(&self, epsilon: f64) -> Option<CachedCurve> {
        self.cache
            .lock()
            .expect("cache lock")
            .get(&epsilon.to_bits())
            .cloned()
    }
}

impl CurveFamily for PldCurveFamily {
    fn curve(&self, epsilon: f64) -> Result<Arc<PredictedCurve>> {
        if let Some(hit) = self.cached(epsilon) {
            return hit;
        }
        let values = self.grid.values();
        let Some(target) = values.iter().position(|&e| e == epsilon) else {
            let value = self.compute(epsilon, None);
            self.cache
                .lock()
                .expect("cache lock")
                .insert(epsilon.to_bits(), value.clone());
            return value;
        };
        // walk back to the nearest computed predecessor, then forward
        let mut start = target;
        while start > 0 && self.cached(values[start - 1]).is_none() {
            start -= 1;
        }
        let mut warm = match start {
            0 => None,
            i => self.cached(values[i - 1]).and_then(|c| c.ok()).map(|c| c.noise_multiplier),
        };
        let mut last = None;
        for &eps in &values[start..=target] {
            let value = self.compute(eps, warm);
            warm = value.as_ref().ok().map(|c| c.noise_multiplier);
            self.cache
                .lock()
                .expect("cache lock")
                .insert(eps.to_bits(), value.clone());
            last = Some(value);
        }
        last.expect("non-empty walk")
    }
}

/// Outcome of [`estimate_epsilon`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Estimate {
    pub epsilon: EpsilonEstimate,
    /// Grid values skipped because their curve could not be computed.
    pub warnings: Vec<String>,
}

/// Whether some interior ROC point lies strictly below the predicted curve.
///
/// Each FPR contributes one point, the last in threshold order, as when the
/// FNRs are kept in a map keyed by FPR. The predicted FNR is first rounded
/// down to the lattice `k / |O'|` the observed FNR lives on, so a shortfall
/// of less than one observation never counts.
pub fn violates(roc: &RocCurve, curve: &SampledTradeoff) -> bool {
    let n = roc.alt_size as f64;
    roc.per_alpha()
        .filter(|p| p.alpha > 0.0 && p.alpha < 1.0)
        .any(|p| {
            let floor = (curve.beta(p.alpha) * n + LATTICE_FUZZ).floor() / n;
            p.beta < floor - COMPARE_EPS
        })
}

/// First grid epsilon (ascending) whose predicted curve is not violated.
pub fn estimate_epsilon<F: CurveFamily + ?Sized>(
    roc: &RocCurve,
    grid: &EpsilonGrid,
    family: &F,
) -> Estimate {
    let mut warnings = Vec::new();
    for &eps in grid.values() {
        match family.curve(eps) {
            Ok(pred) => {
                if !violates(roc, &pred.curve) {
                    return Estimate {
                        epsilon: EpsilonEstimate::Value(eps),
                        warnings,
                    };
                }
            }
            Err(e) => warnings.push(format!("skipped epsilon {eps}: {e}")),
        }
    }
    Estimate {
        epsilon: EpsilonEstimate::ExceedsGrid,
        warnings,
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunResult {
    pub run: usize,
    pub epsilon_emp: EpsilonEstimate,
    pub mean_null: f64,
    pub mean_alt: f64,
    pub warnings: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AuditReport {
    pub config: AuditConfig,
    pub runs: Vec<RunResult>,
    /// Mean and sample standard deviation over runs with a grid estimate.
    pub mean_epsilon: Option<f64>,
    pub std_epsilon: Option<f64>,
    pub exceeded_grid: usize,
    /// Observed ROC of the first run.
    pub observed_roc: RocCurve,
    /// Predicted curve of DP-SGD with composition at the configured noise.
    pub pld_curve: Vec<(f64, f64)>,
    /// Hidden-state linear-loss baseline at the configured noise.
    pub mog_curve: Vec<(f64, f64)>,
}

impl AuditReport {
    pub fn estimates(&self) -> Vec<EpsilonEstimate> {
        self.runs.iter().map(|r| r.epsilon_emp).collect()
    }
}

/// Points written for the predicted curves in a report.
pub const REPORT_CURVE_POINTS: usize = 1001;

/// Runs the whole audit with a fresh curve cache.
pub fn run_audit(cfg: &AuditConfig) -> Result<AuditReport> {
    run_audit_with(cfg, &PldCurveFamily::for_config(cfg))
}

/// Runs `cfg.runs` independent trial/ROC/estimate pipelines.
pub fn run_audit_with<F: CurveFamily + ?Sized>(cfg: &AuditConfig, family: &F) -> Result<AuditReport> {
    cfg.validate()?;
    let mut runs = Vec::with_capacity(cfg.runs);
    let mut first_roc = None;
    for run in 0..cfg.runs {
        let (null, alt) = run_trials(cfg, run)?;
        let roc = roc_from_observations(&null.values, &alt.values)?;
        let est = estimate_epsilon(&roc, &cfg.epsilon_grid, family);
        runs.push(RunResult {
            run,
            epsilon_emp: est.epsilon,
            mean_null: mean_std(&null.values).0,
            mean_alt: mean_std(&alt.values).0,
            warnings: est.warnings,
        });
        if first_roc.is_none() {
            first_roc = Some(roc);
        }
    }
    let values: Vec<f64> = runs.iter().filter_map(|r| r.epsilon_emp.value()).collect();
    let (mean, std) = mean_std(&values);
    let hp = &cfg.hp;
    let profile = PrivacyProfile::dpsgd(hp.noise_multiplier, hp.sampling_rate, hp.steps, &cfg.pld)?;
    Ok(AuditReport {
        config: cfg.clone(),
        mean_epsilon: (!values.is_empty()).then_some(mean),
        std_epsilon: (!values.is_empty()).then_some(std),
        exceeded_grid: runs.len() - values.len(),
        runs,
        observed_roc: first_roc.expect("at least one run"),
        pld_curve: profile.tradeoff(&ProfileGrid::default()).sample(REPORT_CURVE_POINTS),
        mog_curve: mog_tradeoff(hp.noise_multiplier, hp.sampling_rate, hp.steps)
            .sample(REPORT_CURVE_POINTS),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::accountant::TradeoffCurve;

    /// Gaussian curves with `mu = eps / 2`, cheap stand-ins for the accountant.
    pub(crate) struct GaussianFamily;

    impl CurveFamily for GaussianFamily {
        fn curve(&self, epsilon: f64) -> Result<Arc<PredictedCurve>> {
            Ok(Arc::new(PredictedCurve {
                epsilon,
                noise_multiplier: 2.0 / epsilon,
                curve: TradeoffCurve::Gaussian { mu: epsilon / 2.0 }.to_sampled(CURVE_POINTS),
            }))
        }
    }

    #[test]
    fn roc_direct_count() {
        let roc = roc_from_observations(&[1.0, 2.0, 3.0], &[2.0, 3.0, 4.0]).unwrap();
        let p = roc.points.iter().find(|p| p.threshold == 3.0).unwrap();
        assert_eq!((p.alpha, p.beta), (1.0 / 3.0, 1.0 / 3.0));
        let p = roc.points.iter().find(|p| p.threshold == 2.0).unwrap();
        assert_eq!((p.alpha, p.beta), (2.0 / 3.0, 0.0));
        assert_eq!(roc.points.len(), 4);
    }

    #[test]
    fn per_alpha_keeps_last_threshold() {
        let roc = roc_from_observations(&[1.0, 3.0], &[2.0]).unwrap();
        let kept: Vec<_> = roc.per_alpha().map(|p| (p.alpha, p.beta)).collect();
        assert_eq!(kept, vec![(1.0, 0.0), (0.5, 1.0)]);
    }

    #[test]
    fn shortfall_below_one_observation_is_not_a_violation() {
        let roc = RocCurve {
            points: vec![RocPoint {
                alpha: 0.5,
                beta: 0.0,
                threshold: 0.0,
            }],
            alt_size: 100,
        };
        let tiny = TradeoffCurve::Gaussian { mu: 4.0 }.to_sampled(CURVE_POINTS);
        assert!(tiny.beta(0.5) > 0.0 && tiny.beta(0.5) < 0.01);
        assert!(!violates(&roc, &tiny));
        let wide = TradeoffCurve::Gaussian { mu: 1.0 }.to_sampled(CURVE_POINTS);
        assert!(violates(&roc, &wide));
    }

    #[test]
    fn roc_identical_singletons() {
        let roc = roc_from_observations(&[0.7], &[0.7]).unwrap();
        assert_eq!(
            roc.points,
            vec![RocPoint {
                alpha: 1.0,
                beta: 0.0,
                threshold: 0.7
            }]
        );
    }

    #[test]
    fn roc_perfect_separation() {
        let roc = roc_from_observations(&[1.0, 2.0], &[5.0, 6.0]).unwrap();
        assert!(roc.points.iter().any(|p| p.alpha == 0.0 && p.beta == 0.0));
        assert!(roc_from_observations(&[], &[1.0]).is_err());
    }

    #[test]
    fn diagonal_roc_returns_first_grid_value() {
        let n = 1000;
        let points = (0..=n)
            .map(|k| RocPoint {
                alpha: k as f64 / n as f64,
                beta: (n - k) as f64 / n as f64,
                threshold: k as f64,
            })
            .collect();
        let est = estimate_epsilon(&RocCurve { points, alt_size: n }, &EpsilonGrid::default(), &GaussianFamily);
        assert_eq!(est.epsilon, EpsilonEstimate::Value(0.5));
    }

    #[test]
    fn separated_roc_exceeds_grid() {
        let null: Vec<f64> = (0..200).map(|i| i as f64).collect();
        let alt: Vec<f64> = (0..200).map(|i| 1000.0 + i as f64).collect();
        let roc = roc_from_observations(&null, &alt).unwrap();
        let grid = EpsilonGrid::range(0.5, 5.0, 0.1).unwrap();
        let est = estimate_epsilon(&roc, &grid, &GaussianFamily);
        assert_eq!(est.epsilon, EpsilonEstimate::ExceedsGrid);
    }

    #[test]
    fn failing_curves_are_skipped_with_warning() {
        struct Flaky;
        impl CurveFamily for Flaky {
            fn curve(&self, epsilon: f64) -> Result<Arc<PredictedCurve>> {
                if epsilon < 1.0 {
                    return Err(Error::InvalidConfig("nope".into()));
                }
                GaussianFamily.curve(epsilon)
            }
        }
        let roc = roc_from_observations(&[0.0, 1.0], &[0.0, 1.0]).unwrap();
        let est = estimate_epsilon(&roc, &EpsilonGrid::default(), &Flaky);
        assert_eq!(est.epsilon, EpsilonEstimate::Value(1.0));
        assert_eq!(est.warnings.len(), 5);
    }

    #[test]
    fn grid_defaults_and_validation() {
        let g = EpsilonGrid::default();
        assert_eq!(g.values().len(), 196);
        assert_eq!(g.values()[0], 0.5);
        assert_eq!(g.values()[1], 0.6);
        assert_eq!(*g.values().last().unwrap(), 20.0);
        assert!(EpsilonGrid::new(vec![1.0, 1.0]).is_err());
        assert!(EpsilonGrid::new(vec![]).is_err());
    }

    #[test]
    fn estimate_serialises_sentinel() {
        let json = serde_json::to_string(&vec![EpsilonEstimate::Value(1.5), EpsilonEstimate::ExceedsGrid]).unwrap();
        assert_eq!(json, "[1.5,\"exceeds grid\"]");
        let back: Vec<EpsilonEstimate> = serde_json::from_str(&json).unwrap();
        assert_eq!(back[1], EpsilonEstimate::ExceedsGrid);
    }

    #[test]
    fn config_requires_enough_trials() {
        assert!(AuditConfig::new(0.5, 0.1, 10, 1_000, 99, 0).is_err());
        let cfg = AuditConfig::new(0.5, 0.1, 10, 1_000, 100, 0).unwrap();
        assert_eq!(cfg.hp.expected_batch, 100.0);
        assert_eq!(cfg.stream(1, World::DPrime, 3), 303);
    }

    #[test]
    fn zero_steps_give_constant_observations() {
        let mut cfg = AuditConfig::new(0.5, 0.1, 0, 1_000, 100, 4).unwrap();
        cfg.runs = 1;
        let (o, o2) = run_trials(&cfg, 0).unwrap();
        assert!(o.values.iter().chain(&o2.values).all(|&v| v == o.values[0]));
        assert_eq!(o.values[0], -0.09);
    }
}
