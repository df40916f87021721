//! Flat key set shared by flags and the TOML config file.
//!
//! Flags override file values. Every key is optional at parse time; each
//! subcommand asks for the keys it needs and reports the first one missing.

use std::path::{Path, PathBuf};

use anyhow::Context;
use clap::Args;
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Default, PartialEq, Args, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Settings {
    /// Target epsilon (calibrate; audit when --sigma is absent).
    #[arg(long)]
    pub epsilon: Option<f64>,
    /// Target delta [default: 1e-5].
    #[arg(long)]
    pub delta: Option<f64>,
    /// Poisson sampling rate.
    #[arg(long)]
    pub q: Option<f64>,
    /// Number of DP-SGD steps T.
    #[arg(long)]
    pub steps: Option<usize>,
    /// Noise multiplier.
    #[arg(long)]
    pub sigma: Option<f64>,
    /// Zero records in the smaller dataset [default: 1e10].
    #[arg(long)]
    pub num_zeros: Option<u64>,
    /// Trials per world (audit) or trials to simulate [default: 5000 / 1].
    #[arg(long)]
    pub trials: Option<usize>,
    /// Independent audit runs [default: 5].
    #[arg(long)]
    pub runs: Option<usize>,
    /// Master seed [default: 0].
    #[arg(long)]
    pub seed: Option<u64>,
    /// Worker threads [default: available cores].
    #[arg(long)]
    pub workers: Option<usize>,
    /// Output directory [default: out].
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Smallest candidate epsilon [default: 0.5].
    #[arg(long)]
    pub epsilon_min: Option<f64>,
    /// Largest candidate epsilon [default: 20].
    #[arg(long)]
    pub epsilon_max: Option<f64>,
    /// Candidate epsilon spacing [default: 0.1].
    #[arg(long)]
    pub epsilon_step: Option<f64>,
    /// Accountant loss grid spacing [default: 1e-4].
    #[arg(long)]
    pub grid_spacing: Option<f64>,
    /// Use D' as the null world.
    #[arg(long, num_args = 0..=1, default_missing_value = "true")]
    pub swap_worlds: Option<bool>,
    /// World to simulate: D or D' [default: D].
    #[arg(long)]
    pub world: Option<String>,
    /// Write the full trajectory (simulate).
    #[arg(long, num_args = 0..=1, default_missing_value = "true")]
    pub trajectory: Option<bool>,
    /// Observed ROC CSV from a previous audit to copy next to the curves (tradeoff).
    #[arg(long)]
    pub observed: Option<PathBuf>,
}

/// A key the subcommand needs but neither flags nor the file provided.
#[derive(Debug)]
pub struct MissingKey(pub &'static str);

impl std::fmt::Display for MissingKey {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(
            f,
            "missing required key `{}` (pass --{} or set it in the --config file)",
            self.0,
            self.0.replace('_', "-")
        )
    }
}

impl std::error::Error for MissingKey {}

pub fn need<T>(value: Option<T>, key: &'static str) -> Result<T, MissingKey> {
    value.ok_or(MissingKey(key))
}

macro_rules! overlay {
    ($base:ident, $top:ident, $($field:ident),*) => {
        $( if $top.$field.is_some() { $base.$field = $top.$field; } )*
    };
}

impl Settings {
    pub fn load(path: &Path) -> anyhow::Result<Self> {
        let text = std::fs::read_to_string(path)
            .with_context(|| format!("reading config {}", path.display()))?;
        toml::from_str(&text).with_context(|| format!("parsing config {}", path.display()))
    }

    /// `self` with every key set in `flags` replaced.
    pub fn overlaid(mut self, flags: Settings) -> Self {
        overlay!(
            self, flags, epsilon, delta, q, steps, sigma, num_zeros, trials, runs, seed, workers,
            out, epsilon_min, epsilon_max, epsilon_step, grid_spacing, swap_worlds, world,
            trajectory, observed
        );
        self
    }

    pub fn out_dir(&self) -> PathBuf {
        self.out.clone().unwrap_or_else(|| PathBuf::from("out"))
    }

    pub fn worker_count(&self) -> usize {
        self.workers.filter(|&w| w > 0).unwrap_or_else(|| {
            std::thread::available_parallelism().map_or(1, |n| n.get())
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn flags_override_file() {
        let file: Settings = toml::from_str("q = 0.1\nsteps = 100\nseed = 3\n").unwrap();
        let flags = Settings {
            seed: Some(9),
            ..Settings::default()
        };
        let merged = file.overlaid(flags);
        assert_eq!(merged.q, Some(0.1));
        assert_eq!(merged.seed, Some(9));
    }

    #[test]
    fn unknown_keys_are_rejected() {
        assert!(toml::from_str::<Settings>("sigmaa = 1.0").is_err());
    }

    #[test]
    fn missing_key_names_flag() {
        let msg = need::<f64>(None, "num_zeros").unwrap_err().to_string();
        assert!(msg.contains("`num_zeros`") && msg.contains("--num-zeros"));
    }
}
