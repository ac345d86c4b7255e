//! Hit ratio under Rayleigh fading.

use rand_distr::{Distribution, Exp1};
use serde::Serialize;

use crate::library::ModelLibrary;
use crate::network::{bytes_to_bits, RateTable, Topology};
use crate::objective::{ObjectiveError, Placement, Workload};
use crate::seed::{rng_for, stream};

use super::stats::{mean, std_dev};

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct FadingStats {
    pub mean: f64,
    /// Population standard deviation over draws.
    pub std: f64,
}

/// Mean and spread of the hit ratio of `x` over `draws` independent fading
/// realizations. Draw `d` uses stream `(seed, FADING, d)`.
pub fn evaluate_fading(
    lib: &ModelLibrary,
    topo: &Topology,
    wl: &Workload,
    x: &Placement,
    draws: usize,
    seed: u64,
) -> Result<FadingStats, ObjectiveError> {
    Ok(evaluate_fading_many(lib, topo, wl, &[x], draws, seed)?[0])
}

/// As [`evaluate_fading`] for several placements on the same draws.
pub fn evaluate_fading_many(
    lib: &ModelLibrary,
    topo: &Topology,
    wl: &Workload,
    xs: &[&Placement],
    draws: usize,
    seed: u64,
) -> Result<Vec<FadingStats>, ObjectiveError> {
    let (servers, users, models) = (topo.num_servers(), topo.num_users(), lib.num_models());
    if wl.users() != users || wl.models() != models {
        return Err(ObjectiveError::Shape(format!(
            "workload is {}x{}, instance is {users}x{models}",
            wl.users(),
            wl.models()
        )));
    }
    let total = wl.total_mass();
    if total == 0 {
        return Err(ObjectiveError::ZeroDemand);
    }
    let bits: Vec<f64> = (0..models).map(|i| bytes_to_bits(lib.model_size(i))).collect();
    let holders: Vec<Vec<Vec<usize>>> = xs
        .iter()
        .map(|x| (0..models).map(|i| (0..servers).filter(|&m| x.get(m, i)).collect()).collect())
        .collect();
    let mut ratios = vec![Vec::with_capacity(draws); xs.len()];
    for d in 0..draws {
        let mut rng = rng_for(seed, &[stream::FADING, d as u64]);
        let gains: Vec<f64> = (0..servers * users).map(|_| Exp1.sample(&mut rng)).collect();
        let rates = RateTable::with_fading(topo, |m, k| gains[m * users + k]);
        for (h, out) in holders.iter().zip(&mut ratios) {
            let mut mass = 0;
            for k in 0..users {
                for (i, at) in h.iter().enumerate() {
                    let p = wl.prob(k, i);
                    if p > 0
                        && at
                            .iter()
                            .any(|&m| rates.latency(m, k, bits[i], wl.inference(k, i)) <= wl.latency_req(k, i))
                    {
                        mass += p;
                    }
                }
            }
            out.push(mass as f64 / total as f64);
        }
    }
    Ok(ratios
        .iter()
        .map(|r| FadingStats {
            mean: mean(r),
            std: std_dev(r),
        })
        .collect())
}
