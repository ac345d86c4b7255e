//! Seeded Monte-Carlo experiments: capacity/server/user sweeps, fading
//! evaluation, user mobility, probability perturbation and online policies.
//!
//! Every experiment is a pure function of its [`ExperimentConfig`]. One
//! library is generated per experiment. Replicate `r` derives its seed from
//! the master seed; within a replicate the topology and workload are built
//! from per-server and per-user streams, so sweeping `M` or `K` adds nodes to
//! the same scene instead of drawing a fresh one.

mod config;
mod fading;
mod mobility;
mod online;
mod perturb;
mod stats;
mod sweep;
mod workload;

use std::io::Write;

use serde::Serialize;
use thiserror::Error;

use crate::library::LibraryError;
use crate::network::NetworkError;
use crate::objective::ObjectiveError;
use crate::solvers::SolverError;

pub use config::{
    AxisPoint, ExperimentConfig, LibraryPreset, LibrarySettings, MobilitySettings, NetworkSettings,
    OnlineSettings, PerturbationSettings, SweepSettings, WorkloadConfig,
};
pub use fading::{evaluate_fading, evaluate_fading_many, FadingStats};
pub use mobility::{run_mobility, Degradation, MobilityResult};
pub use online::{run_online, OnlineResult, SteadyState, ONLINE_ALGORITHMS};
pub use perturb::{perturb_probabilities, quantize_probabilities, run_perturbation, PerturbationRow};
pub use stats::{mean, sign_test, std_dev, SignTest};
pub use sweep::{run_sweep, run_sweep_with, MetricRow};
pub use workload::generate_workload;

pub const METRICS_SCHEMA: &str = "# pscache-metrics v1";
pub const SERIES_SCHEMA: &str = "# pscache-series v1";
pub const PERTURBATION_SCHEMA: &str = "# pscache-perturbation v1";
pub const STEADY_SCHEMA: &str = "# pscache-steady v1";
pub const DEGRADATION_SCHEMA: &str = "# pscache-degradation v1";

#[derive(Debug, Error)]
pub enum HarnessError {
    #[error("invalid experiment config: {0}")]
    Config(String),
    #[error(transparent)]
    Library(#[from] LibraryError),
    #[error(transparent)]
    Network(#[from] NetworkError),
    #[error(transparent)]
    Objective(#[from] ObjectiveError),
    #[error("{context}: {source}")]
    Solver {
        context: String,
        #[source]
        source: SolverError,
    },
    #[error("writing output: {0}")]
    Io(#[from] std::io::Error),
    #[error("writing CSV: {0}")]
    Csv(#[from] csv::Error),
}

impl HarnessError {
    pub(crate) fn solver(context: impl Into<String>, source: SolverError) -> Self {
        HarnessError::Solver {
            context: context.into(),
            source,
        }
    }
}

/// One point of a time series in long format.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SeriesRow {
    pub slot: usize,
    pub time_s: f64,
    pub algorithm: String,
    pub hit_ratio: f64,
}

/// Writes `rows` as CSV preceded by a schema line.
pub fn write_csv<W: Write, T: Serialize>(mut out: W, schema: &str, rows: &[T]) -> Result<(), HarnessError> {
    writeln!(out, "{schema}")?;
    let mut w = csv::Writer::from_writer(out);
    for row in rows {
        w.serialize(row)?;
    }
    w.flush()?;
    Ok(())
}

/// Runs `task(0..n)` on `jobs` threads, keeping results in index order.
pub(crate) fn parallel_map<T, F>(jobs: usize, n: usize, task: F) -> Result<Vec<T>, HarnessError>
where
    T: Send,
    F: Fn(usize) -> Result<T, HarnessError> + Sync,
{
    use rayon::prelude::*;
    if jobs <= 1 {
        return (0..n).map(&task).collect();
    }
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(jobs)
        .build()
        .map_err(|e| HarnessError::Config(format!("thread pool: {e}")))?;
    pool.install(|| (0..n).into_par_iter().map(&task).collect())
}
