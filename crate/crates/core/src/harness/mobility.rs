//! Fixed placements while users move.

use serde::Serialize;

use crate::network::{generate_topology, mobility_step, MobilityModel};
use crate::objective::HitModel;
use crate::seed::{derive_seed, stream};
use crate::solvers::solve;

use super::workload::generate_workload;
use super::{parallel_map, ExperimentConfig, HarnessError, SeriesRow};

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Degradation {
    pub algorithm: String,
    pub first: f64,
    pub last: f64,
    /// `(first − last) / first`; 0 when `first` is 0.
    pub relative: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct MobilityResult {
    /// Replicate-averaged hit ratio per slot and algorithm.
    pub series: Vec<SeriesRow>,
    /// Computed on the averaged series.
    pub degradation: Vec<Degradation>,
}

/// Places once at `t = 0` on the sweep's base point, then moves users in
/// slots of `slot_s` and re-scores the fixed placements at every slot start.
pub fn run_mobility(cfg: &ExperimentConfig) -> Result<MobilityResult, HarnessError> {
    cfg.validate()?;
    let lib = cfg.build_library()?;
    let point = cfg.sweep.base;
    let slots = cfg.mobility.slots().max(1);
    let model = MobilityModel::default();
    let runs = parallel_map(cfg.jobs, cfg.replicates, |r| {
        let seed = cfg.replicate_seed(r);
        let mut tc = cfg.topology_config(&point);
        tc.mobility = cfg.mobility.pattern;
        let mut topo = generate_topology(&tc, seed)?;
        let wl = generate_workload(&cfg.workload, point.users, &lib, seed)?;
        let placements = cfg
            .algorithms
            .iter()
            .map(|&alg| {
                solve(alg, &lib, &topo, &wl, cfg.epsilon())
                    .map(|s| s.placement)
                    .map_err(|e| HarnessError::solver(format!("seed {seed} (replicate {r}), {alg}"), e))
            })
            .collect::<Result<Vec<_>, _>>()?;
        let mut series = vec![Vec::with_capacity(slots); placements.len()];
        for s in 0..slots {
            if s > 0 {
                let step_seed = derive_seed(seed, &[stream::MOBILITY, s as u64]);
                topo = mobility_step(&topo, &model, cfg.mobility.slot_s, step_seed)?;
            }
            let hm = HitModel::new(&lib, &topo, &wl)?;
            for (x, out) in placements.iter().zip(&mut series) {
                out.push(hm.hit_ratio(x)?);
            }
        }
        Ok(series)
    })?;

    let n = runs.len() as f64;
    let averaged: Vec<Vec<f64>> = (0..cfg.algorithms.len())
        .map(|a| (0..slots).map(|s| runs.iter().map(|run| run[a][s]).sum::<f64>() / n).collect())
        .collect();
    let mut series = Vec::with_capacity(slots * cfg.algorithms.len());
    for s in 0..slots {
        for (alg, values) in cfg.algorithms.iter().zip(&averaged) {
            series.push(SeriesRow {
                slot: s,
                time_s: s as f64 * cfg.mobility.slot_s,
                algorithm: alg.to_string(),
                hit_ratio: values[s],
            });
        }
    }
    let degradation = cfg
        .algorithms
        .iter()
        .zip(&averaged)
        .map(|(alg, v)| {
            let (first, last) = (v[0], v[v.len() - 1]);
            Degradation {
                algorithm: alg.to_string(),
                first,
                last,
                relative: if first > 0.0 { (first - last) / first } else { 0.0 },
            }
        })
        .collect();
    Ok(MobilityResult { series, degradation })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::network::MobilityPattern;

    fn small(pattern: MobilityPattern) -> ExperimentConfig {
        let mut cfg = ExperimentConfig::with_seed(5);
        cfg.replicates = 2;
        cfg.library.models_per_root = Some(3);
        cfg.sweep.base.servers = 3;
        cfg.sweep.base.users = 8;
        cfg.mobility.pattern = pattern;
        cfg.mobility.horizon_s = 600.0;
        cfg
    }

    #[test]
    fn static_users_give_flat_series() {
        let res = run_mobility(&small(MobilityPattern::Static)).unwrap();
        assert_eq!(res.series.len(), 120 * 3);
        for d in &res.degradation {
            assert_eq!(d.first, d.last);
            assert_eq!(d.relative, 0.0);
        }
        let spec: Vec<f64> = res.series.iter().filter(|r| r.algorithm == "spec").map(|r| r.hit_ratio).collect();
        assert!(spec.windows(2).all(|w| w[0] == w[1]));
    }

    #[test]
    fn moving_users_share_the_initial_scene() {
        let fixed = run_mobility(&small(MobilityPattern::Static)).unwrap();
        let moving = run_mobility(&small(MobilityPattern::Vehicle)).unwrap();
        assert_eq!(fixed.degradation[0].first, moving.degradation[0].first);
        assert_eq!(moving.series[3].time_s, 5.0);
        assert!(moving.series.iter().all(|r| (0.0..=1.0).contains(&r.hit_ratio)));
    }
}
