//! Command-line entry point and exit-status policy.

use std::path::PathBuf;
use std::process::ExitCode;

use clap::Parser;
use log::{error, info};

use crate::config::{ExperimentConfig, Scenario};
use crate::report::{self, Format, RunOutput};
use crate::runner::{self, RunError};

pub const EXIT_OK: u8 = 0;
pub const EXIT_CONFIG: u8 = 2;
pub const EXIT_NUMERICAL: u8 = 3;
pub const EXIT_ANOMALY: u8 = 4;

#[derive(Debug, Parser)]
#[command(name = "eqlab", version, about = "Equilibrium-manifold experiments")]
pub struct Cli {
    /// Scenario to run.
    #[arg(value_enum)]
    pub scenario: Scenario,
    /// TOML experiment config; optional for helicoid-check.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Output directory (default: the config's `output`, else `lab-out`).
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Overrides the config seed.
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long, value_enum, default_value = "both")]
    pub format: Format,
    /// Worker threads; 0 uses one per core.
    #[arg(long, default_value_t = 0)]
    pub jobs: usize,
}

/// Exit status for a finished run: anomalies take precedence over failed
/// checks and the failure threshold.
pub fn exit_status(out: &RunOutput, max_failure_fraction: f64) -> u8 {
    if out.summary.contingency.as_ref().is_some_and(|c| c.anomaly) {
        EXIT_ANOMALY
    } else if out.summary.failure_fraction > max_failure_fraction || !out.summary.all_checks_pass() {
        EXIT_NUMERICAL
    } else {
        EXIT_OK
    }
}

fn load(cli: &Cli) -> Result<ExperimentConfig, crate::ConfigError> {
    let mut cfg = match &cli.config {
        Some(path) => ExperimentConfig::load(path)?,
        None => ExperimentConfig::empty(),
    };
    if let Some(seed) = cli.seed {
        cfg.seed = seed;
    }
    Ok(cfg)
}

pub fn execute(cli: &Cli) -> u8 {
    let cfg = match load(cli) {
        Ok(c) => c,
        Err(e) => {
            error!("{e}");
            eprintln!("config error: {e}");
            return EXIT_CONFIG;
        }
    };
    let out = match runner::run(cli.scenario, &cfg, cli.jobs) {
        Ok(o) => o,
        Err(RunError::Config(e)) => {
            eprintln!("config error: {e}");
            return EXIT_CONFIG;
        }
        Err(e) => {
            eprintln!("{e}");
            return EXIT_NUMERICAL;
        }
    };
    let dir = cli
        .out
        .clone()
        .or_else(|| cfg.output.as_ref().map(PathBuf::from))
        .unwrap_or_else(|| PathBuf::from("lab-out"));
    match report::emit(&dir, cli.scenario.name(), &cfg, &out, cli.format) {
        Ok(paths) => {
            for p in paths {
                info!("wrote {}", p.display());
            }
        }
        Err(e) => {
            eprintln!("cannot write results: {e}");
            return EXIT_NUMERICAL;
        }
    }
    for check in out.summary.checks.iter().filter(|c| !c.passed) {
        eprintln!("check failed: {} ({})", check.name, check.detail);
    }
    if let Some(c) = &out.summary.contingency {
        eprintln!("contingency: {}, sup |H| = {:e}", c.cell(), c.sup_mean_curvature);
        if c.anomaly {
            eprintln!("conjecture-anomaly");
        }
    }
    exit_status(&out, cfg.max_failure_fraction)
}

pub fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::new().filter_or("LAB_LOG", "warn")).init();
    let cli = Cli::parse();
    ExitCode::from(execute(&cli))
}
