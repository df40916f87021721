//! `dpsgd-audit`: calibrate, compare trade-off curves, audit, and simulate.

mod commands;
mod manifest;
mod settings;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::error::ErrorKind;
use clap::{CommandFactory, Parser, Subcommand};

use settings::{MissingKey, Settings};

#[derive(Parser)]
#[command(name = "dpsgd-audit", version, about = "Audit the final iterate of DP-SGD against its accountant")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(clap::Args)]
struct Common {
    /// Flat TOML file with any of the flag keys; flags take precedence.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    #[command(flatten)]
    settings: Settings,
}

#[derive(Subcommand)]
enum Command {
    /// Noise multiplier for a target (epsilon, delta); writes the privacy profile.
    Calibrate(Common),
    /// Accountant and linear-loss trade-off curves for a noise multiplier.
    Tradeoff(Common),
    /// Monte Carlo audit of the final iterate; writes the report and curves.
    Audit(Common),
    /// One or more structured DP-SGD runs with the adversarial loss.
    Simulate(Common),
}

fn resolve(common: Common) -> anyhow::Result<Settings> {
    let base = match &common.config {
        Some(path) => Settings::load(path)?,
        None => Settings::default(),
    };
    Ok(base.overlaid(common.settings))
}

fn run(command: Command) -> anyhow::Result<()> {
    let (common, action): (Common, fn(&Settings) -> anyhow::Result<()>) = match command {
        Command::Calibrate(c) => (c, commands::calibrate),
        Command::Tradeoff(c) => (c, commands::tradeoff),
        Command::Audit(c) => (c, commands::audit),
        Command::Simulate(c) => (c, commands::simulate),
    };
    let settings = resolve(common)?;
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(settings.worker_count())
        .build()?;
    pool.install(|| action(&settings))
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            if let Some(missing) = e.downcast_ref::<MissingKey>() {
                Cli::command()
                    .error(ErrorKind::MissingRequiredArgument, missing.to_string())
                    .exit();
            }
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
