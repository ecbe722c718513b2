//! Experiment runner for moving-average option pricing.
//!
//! Each experiment resolves an [`ExperimentConfig`], validates every pricing
//! run it plans, executes them and writes one CSV per output table.

pub mod config;
mod error;
pub mod experiments;
pub mod table;

pub use config::{ConfigSources, Experiment, ExperimentConfig, Scale};
pub use error::{CliError, Result};
pub use experiments::{plan, print_summary, run, write_report, Report};
pub use table::{Cell, RawCsv, Table};

/// Resolves, runs and writes `experiment`. Returns the written files.
pub fn run_experiment(experiment: Experiment, sources: &ConfigSources) -> Result<Vec<std::path::PathBuf>> {
    let cfg = ExperimentConfig::resolve(experiment, sources)?;
    log::info!("running {experiment} at {:?} scale into {}", cfg.scale, cfg.out.display());
    let report = run(experiment, &cfg)?;
    print_summary(&report);
    write_report(experiment, &cfg, &report)
}
