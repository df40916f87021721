//! Browser entry points. Every function returns a JSON string so the page
//! needs nothing beyond `JSON.parse`.

use dpsgd_audit::accountant::{
    calibrate_sigma, mog_tradeoff, PldOptions, PrivacyProfile, ProfileGrid,
};
use dpsgd_audit::audit::{roc_from_observations, run_trials, AuditConfig};
use serde::Serialize;
use wasm_bindgen::prelude::*;

/// Worst-case dataset size used by the demo audit.
const NUM_ZEROS: u64 = 10_000_000_000;

fn options(grid_spacing: f64) -> PldOptions {
    PldOptions::default().with_grid_spacing(grid_spacing)
}

fn to_json<T: Serialize>(value: &T) -> Result<String, String> {
    serde_json::to_string(value).map_err(|e| e.to_string())
}

#[derive(Serialize)]
struct Curves {
    pld: Vec<(f64, f64)>,
    mog: Vec<(f64, f64)>,
}

/// Accountant and linear-loss trade-off curves, `points` alpha values each.
pub fn tradeoff_json(
    sigma: f64,
    q: f64,
    steps: usize,
    grid_spacing: f64,
    points: usize,
) -> Result<String, String> {
    let profile =
        PrivacyProfile::dpsgd(sigma, q, steps, &options(grid_spacing)).map_err(|e| e.to_string())?;
    to_json(&Curves {
        pld: profile.tradeoff(&ProfileGrid::default()).sample(points),
        mog: mog_tradeoff(sigma, q, steps).sample(points),
    })
}

#[derive(Serialize)]
struct Calibration {
    sigma: f64,
    achieved_delta: f64,
}

pub fn calibrate_json(
    epsilon: f64,
    delta: f64,
    q: f64,
    steps: usize,
    grid_spacing: f64,
) -> Result<String, String> {
    let opts = options(grid_spacing);
    let sigma = calibrate_sigma(epsilon, delta, q, steps, &opts).map_err(|e| e.to_string())?;
    let profile = PrivacyProfile::dpsgd(sigma, q, steps, &opts).map_err(|e| e.to_string())?;
    to_json(&Calibration {
        sigma,
        achieved_delta: profile.worst_delta(epsilon),
    })
}

#[derive(Serialize)]
struct Simulated {
    roc: Vec<(f64, f64)>,
    mean_null: f64,
    mean_alt: f64,
}

/// One audit run without the epsilon search: the observed ROC, one point per FPR.
pub fn simulate_audit_json(
    sigma: f64,
    q: f64,
    steps: usize,
    trials: usize,
    seed: u64,
) -> Result<String, String> {
    let cfg = AuditConfig::new(sigma, q, steps, NUM_ZEROS, trials, seed).map_err(|e| e.to_string())?;
    let (null, alt) = run_trials(&cfg, 0).map_err(|e| e.to_string())?;
    let roc = roc_from_observations(&null.values, &alt.values).map_err(|e| e.to_string())?;
    let mean = |v: &[f64]| v.iter().sum::<f64>() / v.len() as f64;
    to_json(&Simulated {
        roc: roc.per_alpha().map(|p| (p.alpha, p.beta)).collect(),
        mean_null: mean(&null.values),
        mean_alt: mean(&alt.values),
    })
}

#[wasm_bindgen]
pub fn tradeoff(sigma: f64, q: f64, steps: usize, grid_spacing: f64, points: usize) -> Result<String, JsError> {
    tradeoff_json(sigma, q, steps, grid_spacing, points).map_err(|e| JsError::new(&e))
}

#[wasm_bindgen]
pub fn calibrate(epsilon: f64, delta: f64, q: f64, steps: usize, grid_spacing: f64) -> Result<String, JsError> {
    calibrate_json(epsilon, delta, q, steps, grid_spacing).map_err(|e| JsError::new(&e))
}

#[wasm_bindgen]
pub fn simulate_audit(sigma: f64, q: f64, steps: usize, trials: usize, seed: u64) -> Result<String, JsError> {
    simulate_audit_json(sigma, q, steps, trials, seed).map_err(|e| JsError::new(&e))
}
