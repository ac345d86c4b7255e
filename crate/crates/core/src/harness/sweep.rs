//! Capacity, server-count and user-count sweeps.

use std::sync::atomic::{AtomicUsize, Ordering};

use serde::Serialize;

use crate::network::generate_topology;
use crate::objective::HitModel;
use crate::solvers::{solve, Algorithm};

use super::fading::evaluate_fading_many;
use super::workload::generate_workload;
use super::{parallel_map, AxisPoint, ExperimentConfig, HarnessError};

/// One algorithm on one replicate of one axis point.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MetricRow {
    pub seed: u64,
    pub algorithm: String,
    /// Set for `spec` only.
    pub epsilon: Option<f64>,
    pub q_bytes: u64,
    pub m: usize,
    pub k: usize,
    pub hit_ratio_expected: f64,
    pub hit_ratio_fading: f64,
    /// Zero unless the config asks for timings.
    pub runtime_s: f64,
    /// Spread of the fading hit ratio over draws.
    pub std_dev: f64,
}

pub fn run_sweep(cfg: &ExperimentConfig) -> Result<Vec<MetricRow>, HarnessError> {
    run_sweep_with(cfg, &|_, _| {})
}

/// [`run_sweep`], calling `progress(done, total)` as replicates finish.
/// Rows come out ordered by axis point, replicate, then algorithm.
pub fn run_sweep_with(
    cfg: &ExperimentConfig,
    progress: &(dyn Fn(usize, usize) + Sync),
) -> Result<Vec<MetricRow>, HarnessError> {
    cfg.validate()?;
    let lib = cfg.build_library()?;
    let points = cfg.sweep.points();
    let total = points.len() * cfg.replicates;
    let done = AtomicUsize::new(0);
    let rows = parallel_map(cfg.jobs, total, |t| {
        let point = points[t / cfg.replicates];
        let rows = replicate_rows(cfg, &lib, &point, t % cfg.replicates)?;
        progress(done.fetch_add(1, Ordering::SeqCst) + 1, total);
        Ok(rows)
    })?;
    Ok(rows.into_iter().flatten().collect())
}

fn replicate_rows(
    cfg: &ExperimentConfig,
    lib: &crate::library::ModelLibrary,
    point: &AxisPoint,
    replicate: usize,
) -> Result<Vec<MetricRow>, HarnessError> {
    let seed = cfg.replicate_seed(replicate);
    let tag = |alg: Algorithm| {
        format!(
            "seed {seed} (replicate {replicate}), Q = {} GB, M = {}, K = {}, {alg}",
            point.capacity_gb, point.servers, point.users
        )
    };
    let topo = generate_topology(&cfg.topology_config(point), seed)?;
    let wl = generate_workload(&cfg.workload, point.users, lib, seed)?;
    let hm = HitModel::new(lib, &topo, &wl)?;
    let mut solutions = Vec::with_capacity(cfg.algorithms.len());
    for &alg in &cfg.algorithms {
        let sol = solve(alg, lib, &topo, &wl, cfg.epsilon()).map_err(|e| HarnessError::solver(tag(alg), e))?;
        debug_assert_eq!(sol.report.hit_mass, hm.hit_mass(&sol.placement));
        solutions.push(sol);
    }
    let placements: Vec<_> = solutions.iter().map(|s| &s.placement).collect();
    let fading = evaluate_fading_many(lib, &topo, &wl, &placements, cfg.fading_draws, seed)?;
    Ok(cfg
        .algorithms
        .iter()
        .zip(solutions.iter().zip(fading))
        .map(|(&alg, (sol, f))| MetricRow {
            seed,
            algorithm: alg.to_string(),
            epsilon: sol.report.epsilon,
            q_bytes: point.capacity_bytes(),
            m: point.servers,
            k: point.users,
            hit_ratio_expected: sol.report.hit_ratio,
            hit_ratio_fading: f.mean,
            runtime_s: if cfg.record_runtime { sol.report.runtime_s } else { 0.0 },
            std_dev: f.std,
        })
        .collect())
}
