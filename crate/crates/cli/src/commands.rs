use std::collections::BTreeMap;
use std::fmt::Write as _;

use anyhow::{bail, Context, Result};
use dpsgd_audit::accountant::{
    calibrate_sigma, mog_tradeoff, PldOptions, PrivacyProfile, ProfileGrid,
};
use dpsgd_audit::adversarial::AdversarialLoss;
use dpsgd_audit::audit::{run_audit, AuditConfig, EpsilonEstimate, EpsilonGrid, World};
use dpsgd_audit::export::{csv_table, curve_csv, fmt_float};
use dpsgd_audit::mechanism::{
    run_dpsgd_structured_traced, run_dpsgd_structured_with, HyperParams, SeededDraws,
};
use rayon::prelude::*;
use serde::Serialize;

use crate::manifest::{RunDir, RunManifest};
use crate::settings::{need, MissingKey, Settings};

const DEFAULT_DELTA: f64 = 1e-5;
const DEFAULT_NUM_ZEROS: u64 = 10_000_000_000;
const CURVE_POINTS: usize = 1001;

fn open_run(name: &str, s: &Settings) -> Result<RunDir> {
    RunDir::create(RunManifest {
        subcommand: name.to_owned(),
        version: env!("CARGO_PKG_VERSION"),
        config: s.clone(),
        resolved: BTreeMap::new(),
        master_seed: s.seed.unwrap_or(0),
        workers: s.worker_count(),
        out_dir: s.out_dir(),
        artifacts: BTreeMap::new(),
    })
}

fn pld_options(s: &Settings) -> PldOptions {
    match s.grid_spacing {
        Some(h) => PldOptions::default().with_grid_spacing(h),
        None => PldOptions::default(),
    }
}

fn epsilon_grid(s: &Settings) -> Result<EpsilonGrid> {
    let d = EpsilonGrid::default();
    let vals = d.values();
    Ok(EpsilonGrid::range(
        s.epsilon_min.unwrap_or(vals[0]),
        s.epsilon_max.unwrap_or(vals[vals.len() - 1]),
        s.epsilon_step.unwrap_or(0.1),
    )?)
}

fn json_bytes<T: Serialize>(value: &T) -> Result<Vec<u8>> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    Ok(text.into_bytes())
}

#[derive(Serialize)]
struct Calibration {
    epsilon: f64,
    delta: f64,
    q: f64,
    steps: usize,
    sigma: f64,
    achieved_delta: f64,
}

pub fn calibrate(s: &Settings) -> Result<()> {
    let epsilon = need(s.epsilon, "epsilon")?;
    let delta = s.delta.unwrap_or(DEFAULT_DELTA);
    let q = need(s.q, "q")?;
    let steps = need(s.steps, "steps")?;
    let opts = pld_options(s);
    let mut run = open_run("calibrate", s)?;

    let sigma = calibrate_sigma(epsilon, delta, q, steps, &opts)?;
    let profile = PrivacyProfile::dpsgd(sigma, q, steps, &opts)?;
    let achieved_delta = profile.worst_delta(epsilon);
    run.resolve("sigma", sigma)?;

    let eps: Vec<f64> = (0..=200).map(|i| i as f64 * 0.1).collect();
    let rows = profile
        .table(&eps)
        .into_iter()
        .map(|r| vec![r.epsilon, r.delta_add, r.delta_remove, r.delta_add.max(r.delta_remove)]);
    run.write(
        "profile.csv",
        csv_table(&["epsilon", "delta_add", "delta_remove", "delta"], rows).as_bytes(),
    )?;
    run.write(
        "calibration.json",
        &json_bytes(&Calibration {
            epsilon,
            delta,
            q,
            steps,
            sigma,
            achieved_delta,
        })?,
    )?;
    run.finish()?;
    println!("sigma = {}", fmt_float(sigma));
    println!("delta({epsilon}) = {}", fmt_float(achieved_delta));
    Ok(())
}

#[derive(Serialize)]
struct TradeoffSummary {
    sigma: f64,
    q: f64,
    steps: usize,
    delta: f64,
    /// Smallest epsilon with `delta(epsilon) <= delta` on a 1e-3 grid, if below 50.
    epsilon: Option<f64>,
}

fn epsilon_for(profile: &PrivacyProfile, delta: f64) -> Option<f64> {
    if profile.worst_delta(0.0) <= delta {
        return Some(0.0);
    }
    let (mut lo, mut hi) = (0usize, 50_000usize);
    if profile.worst_delta(hi as f64 * 1e-3) > delta {
        return None;
    }
    while hi - lo > 1 {
        let mid = (lo + hi) / 2;
        if profile.worst_delta(mid as f64 * 1e-3) > delta {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Some(hi as f64 * 1e-3)
}

pub fn tradeoff(s: &Settings) -> Result<()> {
    let sigma = need(s.sigma, "sigma")?;
    let q = need(s.q, "q")?;
    let steps = need(s.steps, "steps")?;
    let delta = s.delta.unwrap_or(DEFAULT_DELTA);
    let opts = pld_options(s);
    HyperParams::new(sigma, q, steps, 1.0)?;
    let mut run = open_run("tradeoff", s)?;

    let profile = PrivacyProfile::dpsgd(sigma, q, steps, &opts)?;
    let pld = profile.tradeoff(&ProfileGrid::default()).sample(CURVE_POINTS);
    let mog = mog_tradeoff(sigma, q, steps).sample(CURVE_POINTS);
    run.write("pld_curve.csv", curve_csv(&pld).as_bytes())?;
    run.write("mog_curve.csv", curve_csv(&mog).as_bytes())?;
    if let Some(path) = &s.observed {
        let text = std::fs::read_to_string(path)
            .with_context(|| format!("reading observed curve {}", path.display()))?;
        run.write("observed_roc.csv", text.as_bytes())?;
    }
    let summary = TradeoffSummary {
        sigma,
        q,
        steps,
        delta,
        epsilon: epsilon_for(&profile, delta),
    };
    run.write("tradeoff.json", &json_bytes(&summary)?)?;
    run.finish()?;
    match summary.epsilon {
        Some(e) => println!("({e}, {delta})-DP with all iterates released"),
        None => println!("epsilon at delta {delta} exceeds 50"),
    }
    Ok(())
}

fn estimate_cell(e: EpsilonEstimate) -> String {
    match e {
        EpsilonEstimate::Value(v) => fmt_float(v),
        EpsilonEstimate::ExceedsGrid => EpsilonEstimate::SENTINEL.to_owned(),
    }
}

pub fn audit(s: &Settings) -> Result<()> {
    let q = need(s.q, "q")?;
    let steps = need(s.steps, "steps")?;
    let delta = s.delta.unwrap_or(DEFAULT_DELTA);
    if s.sigma.is_none() && s.epsilon.is_none() {
        return Err(MissingKey("sigma").into());
    }
    let opts = pld_options(s);
    let grid = epsilon_grid(s)?;
    let mut run = open_run("audit", s)?;

    let sigma = match (s.sigma, s.epsilon) {
        (Some(sigma), _) => sigma,
        (None, Some(eps)) => {
            let sigma = calibrate_sigma(eps, delta, q, steps, &opts)?;
            run.resolve("sigma", sigma)?;
            sigma
        }
        (None, None) => unreachable!("checked above"),
    };
    let mut cfg = AuditConfig::new(
        sigma,
        q,
        steps,
        s.num_zeros.unwrap_or(DEFAULT_NUM_ZEROS),
        s.trials.unwrap_or(5000),
        s.seed.unwrap_or(0),
    )?;
    cfg.runs = s.runs.unwrap_or(5);
    cfg.delta = delta;
    cfg.epsilon_grid = grid;
    cfg.swap_worlds = s.swap_worlds.unwrap_or(false);
    cfg.pld = opts;
    cfg.validate()?;

    let report = run_audit(&cfg)?;

    let mut runs_csv = String::from("run,epsilon_emp,mean_null,mean_alt\n");
    for r in &report.runs {
        let _ = writeln!(
            runs_csv,
            "{},{},{},{}",
            r.run,
            estimate_cell(r.epsilon_emp),
            fmt_float(r.mean_null),
            fmt_float(r.mean_alt)
        );
    }
    let roc_rows = report
        .observed_roc
        .points
        .iter()
        .map(|p| vec![p.alpha, p.beta, p.threshold]);
    run.write("report.json", &json_bytes(&report)?)?;
    run.write("runs.csv", runs_csv.as_bytes())?;
    run.write(
        "observed_roc.csv",
        csv_table(&["alpha", "beta", "threshold"], roc_rows).as_bytes(),
    )?;
    run.write("pld_curve.csv", curve_csv(&report.pld_curve).as_bytes())?;
    run.write("mog_curve.csv", curve_csv(&report.mog_curve).as_bytes())?;
    run.finish()?;

    let shown: Vec<String> = report.runs.iter().map(|r| estimate_cell(r.epsilon_emp)).collect();
    println!("epsilon_emp per run: {}", shown.join(" "));
    match (report.mean_epsilon, report.std_epsilon) {
        (Some(m), Some(sd)) => println!("mean {} std {}", fmt_float(m), fmt_float(sd)),
        _ => println!("every run exceeded the epsilon grid"),
    }
    for r in &report.runs {
        for w in &r.warnings {
            eprintln!("warning (run {}): {w}", r.run);
        }
    }
    Ok(())
}

fn parse_world(s: &Settings) -> Result<World> {
    match s.world.as_deref().unwrap_or("D") {
        "D" | "d" => Ok(World::D),
        "D'" | "d'" | "Dprime" | "dprime" => Ok(World::DPrime),
        other => bail!("unknown world {other:?}; expected D or D'"),
    }
}

pub fn simulate(s: &Settings) -> Result<()> {
    let sigma = need(s.sigma, "sigma")?;
    let q = need(s.q, "q")?;
    let steps = need(s.steps, "steps")?;
    let num_zeros = s.num_zeros.unwrap_or(DEFAULT_NUM_ZEROS);
    let world = parse_world(s)?;
    let seed = s.seed.unwrap_or(0);
    let hp = HyperParams::new(sigma, q, steps, q * num_zeros as f64)?;
    let loss = AdversarialLoss::new(&hp)?;
    let ds = world.dataset(num_zeros);
    let mut run = open_run("simulate", s)?;

    if s.trajectory.unwrap_or(false) {
        let traj = run_dpsgd_structured_traced(&ds, &loss, &hp, &mut SeededDraws::new(seed))?;
        let rows = traj
            .iterates()
            .iter()
            .enumerate()
            .map(|(k, &theta)| vec![k as f64, theta]);
        run.write("trajectory.csv", csv_table(&["step", "theta"], rows).as_bytes())?;
        let last = traj.final_iterate();
        run.finish()?;
        println!("final iterate {}", fmt_float(last));
        println!("extracted log-likelihood ratio sum {}", fmt_float(loss.extract_llr_sum(last)?));
        return Ok(());
    }

    let trials = s.trials.unwrap_or(1).max(1);
    let one = |t: usize| -> Result<Vec<f64>> {
        let mut draws = SeededDraws::with_stream(seed, t as u64);
        let theta = run_dpsgd_structured_with(&ds, &loss, &hp, &mut draws)?;
        Ok(vec![t as f64, theta, loss.extract_llr_sum(theta)?])
    };
    let rows = (0..trials).into_par_iter().map(one).collect::<Result<Vec<_>>>()?;
    if trials == 1 {
        println!("final iterate {}", fmt_float(rows[0][1]));
        println!("extracted log-likelihood ratio sum {}", fmt_float(rows[0][2]));
    } else {
        println!("simulated {trials} trials on {world}");
    }
    run.write(
        "simulate.csv",
        csv_table(&["trial", "final_iterate", "observation"], rows).as_bytes(),
    )?;
    run.finish()?;
    Ok(())
}
