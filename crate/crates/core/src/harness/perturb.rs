//! Placement under misestimated request probabilities.

use rand_distr::{Beta, Distribution};
use serde::Serialize;

use crate::objective::{HitModel, Workload, PROB_SCALE};
use crate::seed::{derive_seed, rng_for, stream};
use crate::solvers::solve;

use super::workload::{generate_workload, quantize_row};
use super::{parallel_map, ExperimentConfig, HarnessError};
use crate::network::generate_topology;

/// Largest variance used, as a fraction of the Beta limit `μ(1 − μ)`.
const VARIANCE_CLAMP: f64 = 0.99;

/// Beta shape parameters with mean `mu` and standard deviation `cv * mu`;
/// `None` when the distribution degenerates to the point `mu`.
pub(crate) fn beta_params(mu: f64, cv: f64) -> Option<(f64, f64)> {
    let limit = mu * (1.0 - mu);
    let mut var = (cv * mu).powi(2);
    if var == 0.0 || limit <= 0.0 {
        return None;
    }
    if var >= limit {
        var = VARIANCE_CLAMP * limit;
    }
    let common = limit / var - 1.0;
    Some((mu * common, (1.0 - mu) * common))
}

/// Replaces each `p` by a Beta draw with mean `p` and standard deviation
/// `cv · p`. Draws are not renormalized, except that a user whose draws sum
/// past 1 is scaled back to 1.
pub fn perturb_probabilities(wl: &Workload, cv: f64, seed: u64) -> Result<Workload, HarnessError> {
    if !(0.0..=0.5).contains(&cv) {
        return Err(HarnessError::Config(format!("cv must lie in [0, 0.5], got {cv}")));
    }
    if cv == 0.0 {
        return Ok(wl.clone());
    }
    let mut prob = Vec::with_capacity(wl.users() * wl.models());
    for k in 0..wl.users() {
        let mut rng = rng_for(seed, &[stream::PERTURB, k as u64]);
        let mut row: Vec<u64> = wl
            .prob_row(k)
            .iter()
            .map(|&p| {
                let mu = p as f64 / PROB_SCALE as f64;
                match beta_params(mu, cv) {
                    None => p,
                    Some((a, b)) => {
                        let x: f64 = Beta::new(a, b).expect("positive shapes").sample(&mut rng);
                        (x * PROB_SCALE as f64).round() as u64
                    }
                }
            })
            .collect();
        let sum: u64 = row.iter().sum();
        if sum > PROB_SCALE {
            for p in &mut row {
                *p = (*p as u128 * PROB_SCALE as u128 / sum as u128) as u64;
            }
        }
        prob.extend(row);
    }
    Ok(wl.with_probabilities(prob)?)
}

/// Snaps every probability to a multiple of `quantum`, as generated
/// workloads are.
pub fn quantize_probabilities(wl: &Workload, quantum: u64) -> Result<Workload, HarnessError> {
    if quantum == 0 || PROB_SCALE % quantum != 0 {
        return Err(HarnessError::Config(format!("quantum {quantum} must divide {PROB_SCALE}")));
    }
    let mut prob = Vec::with_capacity(wl.users() * wl.models());
    for k in 0..wl.users() {
        let mut row = wl.prob_row(k).to_vec();
        quantize_row(&mut row, quantum);
        prob.extend(row);
    }
    Ok(wl.with_probabilities(prob)?)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PerturbationRow {
    pub cv: f64,
    pub replicate: usize,
    pub seed: u64,
    pub algorithm: String,
    /// Hit ratio under the true probabilities of a placement computed from
    /// the perturbed ones.
    pub hit_ratio: f64,
}

/// For every replicate and CV: perturb the workload, snap the estimate to the
/// workload quantum, solve on it and score on the truth. Uses the sweep's
/// base point.
pub fn run_perturbation(cfg: &ExperimentConfig) -> Result<Vec<PerturbationRow>, HarnessError> {
    cfg.validate()?;
    let lib = cfg.build_library()?;
    let point = cfg.sweep.base;
    let eps = cfg.epsilon();
    let per_replicate = parallel_map(cfg.jobs, cfg.replicates, |r| {
        let seed = cfg.replicate_seed(r);
        let topo = generate_topology(&cfg.topology_config(&point), seed)?;
        let truth = generate_workload(&cfg.workload, point.users, &lib, seed)?;
        let hm = HitModel::new(&lib, &topo, &truth)?;
        let mut rows = Vec::new();
        for &cv in &cfg.perturbation.cv {
            let est = perturb_probabilities(&truth, cv, derive_seed(seed, &[stream::PERTURB]))?;
            let est = quantize_probabilities(&est, cfg.workload.prob_quantum)?;
            for &alg in &cfg.algorithms {
                let sol = solve(alg, &lib, &topo, &est, eps)
                    .map_err(|e| HarnessError::solver(format!("replicate {r} seed {seed} cv {cv} {alg}"), e))?;
                rows.push(PerturbationRow {
                    cv,
                    replicate: r,
                    seed,
                    algorithm: alg.to_string(),
                    hit_ratio: hm.hit_ratio(&sol.placement)?,
                });
            }
        }
        Ok(rows)
    })?;
    Ok(per_replicate.into_iter().flatten().collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::objective::tests::workload;
    use crate::seed::rng_for;

    #[test]
    fn zero_cv_is_identity() {
        let w = workload(2, 2, vec![100, 200, 300, 400], 1.0);
        assert_eq!(perturb_probabilities(&w, 0.0, 1).unwrap(), w);
        assert!(perturb_probabilities(&w, 0.6, 1).is_err());
    }

    #[test]
    fn beta_moments() {
        let mut rng = rng_for(5, &[]);
        let n = 100_000;
        for (mu, cv) in [(0.1, 0.3), (0.02, 0.5), (0.3, 0.1)] {
            let (a, b) = beta_params(mu, cv).unwrap();
            let d = Beta::new(a, b).unwrap();
            let xs: Vec<f64> = (0..n).map(|_| d.sample(&mut rng)).collect();
            let m = xs.iter().sum::<f64>() / n as f64;
            let sd = (xs.iter().map(|x| (x - m).powi(2)).sum::<f64>() / n as f64).sqrt();
            assert!((m - mu).abs() / mu < 0.01, "mean {m} vs {mu}");
            if (mu, cv) == (0.1, 0.3) {
                assert!((sd - cv * mu).abs() / (cv * mu) < 0.03, "sd {sd}");
            }
        }
    }

    #[test]
    fn clamps_excess_variance() {
        // cv·μ = 0.45 exceeds sqrt(μ(1 − μ)) = 0.3 at μ = 0.9.
        let (a, b) = beta_params(0.9, 0.5).unwrap();
        let var = a * b / ((a + b).powi(2) * (a + b + 1.0));
        assert!((var - 0.99 * 0.09).abs() < 1e-12);
        assert!(beta_params(0.0, 0.3).is_none());
        assert!(beta_params(1.0, 0.3).is_none());
    }

    #[test]
    fn quantized_estimates() {
        let w = workload(1, 3, vec![123_456, 49, 700_051], 1.0);
        let q = quantize_probabilities(&w, 100).unwrap();
        assert_eq!(q.prob_row(0), &[123_500, 0, 700_100]);
        assert!(quantize_probabilities(&w, 7).is_err());
    }

    #[test]
    fn perturbed_rows_stay_valid() {
        let w = workload(1, 2, vec![900_000, 100_000], 1.0);
        for seed in 0..50 {
            let p = perturb_probabilities(&w, 0.5, seed).unwrap();
            assert!(p.prob_row(0).iter().sum::<u64>() <= PROB_SCALE);
        }
    }
}
