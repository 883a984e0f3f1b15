//! Experiment orchestration: configs, trajectory tracking, Monte-Carlo runs
//! over seeds and reports.
//!
//! Seeds are dispatched to a rayon pool and collected in seed order, and
//! every aggregate is a sequential fold over that order, so reports do not
//! depend on the thread count.

mod config;
mod experiments;
mod report;
mod tracking;

pub use config::{AutoTag, Experiment, ExperimentConfig, FName, FrakD, FrakDTag, GridConfig, MSpec, ProxyOverrides, StatisticConfig};
pub use experiments::two_particle_phase_shift;
pub use report::{Aggregate, Check, Comparison, RunReport, SeedMetrics, RNG_PROVENANCE};
pub use tracking::{bulk_margin, track_trajectory, TrajectoryRecord, MATCH_TOL};

use crate::error::{Error, Result};
use rayon::prelude::*;
use std::path::PathBuf;
use std::time::Instant;

/// Execution options that do not affect results.
#[derive(Debug, Clone, Default)]
pub struct RunOptions {
    /// Worker threads; `None` uses the global pool.
    pub threads: Option<usize>,
    /// Directory for curve and log artifacts.
    pub out_dir: Option<PathBuf>,
}

/// Runs one experiment.
pub fn run(cfg: &ExperimentConfig, opts: &RunOptions) -> Result<RunReport> {
    cfg.validate()?;
    let start = Instant::now();
    let mut report = match opts.threads {
        Some(n) => {
            let pool = rayon::ThreadPoolBuilder::new().num_threads(n.max(1)).build().map_err(|e| Error::Config(e.to_string()))?;
            pool.install(|| experiments::dispatch(cfg, opts))?
        }
        None => experiments::dispatch(cfg, opts)?,
    };
    report.wall_clock_secs = start.elapsed().as_secs_f64();
    if let Some(dir) = &opts.out_dir {
        report.write(dir)?;
    }
    Ok(report)
}

/// Maps `f` over seeds in parallel, returning results in seed order.
pub(crate) fn par_seeds<T: Send, F: Fn(u64) -> Result<T> + Sync + Send>(seeds: &[u64], f: F) -> Result<Vec<T>> {
    seeds.par_iter().map(|&s| f(s)).collect()
}
