//! Static placements against LRU and LFU caches on the same request trace.

use serde::Serialize;

use crate::network::generate_topology;
use crate::objective::HitModel;
use crate::seed::{derive_seed, stream};
use crate::solvers::{simulate_online, solve, static_series, Algorithm, OnlineConfig, OnlinePolicy};

use super::stats::mean;
use super::workload::generate_workload;
use super::{parallel_map, ExperimentConfig, HarnessError, SeriesRow};

/// Series order of the online comparison.
pub const ONLINE_ALGORITHMS: [Algorithm; 4] = [Algorithm::Spec, Algorithm::Gen, Algorithm::Lfu, Algorithm::Lru];

/// Post-warm-up mean hit ratio of one algorithm on one replicate.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SteadyState {
    pub replicate: usize,
    pub seed: u64,
    pub algorithm: String,
    pub mean: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct OnlineResult {
    /// Replicate-averaged per-slot hit ratio.
    pub series: Vec<SeriesRow>,
    pub steady: Vec<SteadyState>,
}

/// Spec and Gen place once from the true probabilities; LRU and LFU start
/// empty. All four see the same request trace.
pub fn run_online(cfg: &ExperimentConfig) -> Result<OnlineResult, HarnessError> {
    cfg.validate()?;
    let lib = cfg.build_library()?;
    let point = cfg.sweep.base;
    let slots = cfg.online.slots;
    let runs = parallel_map(cfg.jobs, cfg.replicates, |r| {
        let seed = cfg.replicate_seed(r);
        let topo = generate_topology(&cfg.topology_config(&point), seed)?;
        let wl = generate_workload(&cfg.workload, point.users, &lib, seed)?;
        let hm = HitModel::new(&lib, &topo, &wl)?;
        let trace = crate::solvers::draw_requests(&wl, slots, derive_seed(seed, &[stream::ONLINE]));
        ONLINE_ALGORITHMS
            .iter()
            .map(|&alg| {
                let policy = match alg {
                    Algorithm::Lru => OnlinePolicy::Lru,
                    Algorithm::Lfu => OnlinePolicy::Lfu,
                    _ => {
                        let x = solve(alg, &lib, &topo, &wl, cfg.epsilon())
                            .map_err(|e| HarnessError::solver(format!("seed {seed} (replicate {r}), {alg}"), e))?
                            .placement;
                        return Ok(static_series(&topo, &hm, &x, &trace));
                    }
                };
                let run = simulate_online(
                    &lib,
                    &topo,
                    &hm,
                    &trace,
                    OnlineConfig {
                        policy,
                        admission: cfg.online.admit,
                    },
                );
                Ok(run.series)
            })
            .collect::<Result<Vec<_>, HarnessError>>()
    })?;

    let mut steady = Vec::with_capacity(runs.len() * ONLINE_ALGORITHMS.len());
    for (r, run) in runs.iter().enumerate() {
        for (alg, s) in ONLINE_ALGORITHMS.iter().zip(run) {
            steady.push(SteadyState {
                replicate: r,
                seed: cfg.replicate_seed(r),
                algorithm: alg.to_string(),
                mean: mean(&s[cfg.online.warmup_slots..]),
            });
        }
    }
    let n = runs.len() as f64;
    let mut series = Vec::with_capacity(slots * ONLINE_ALGORITHMS.len());
    for s in 0..slots {
        for (a, alg) in ONLINE_ALGORITHMS.iter().enumerate() {
            series.push(SeriesRow {
                slot: s,
                time_s: s as f64 * cfg.online.slot_s,
                algorithm: alg.to_string(),
                hit_ratio: runs.iter().map(|run| run[a][s]).sum::<f64>() / n,
            });
        }
    }
    Ok(OnlineResult { series, steady })
}
