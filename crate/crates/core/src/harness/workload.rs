//! Zipf request workloads.

use rand::seq::SliceRandom;
use rand::Rng;

use crate::library::ModelLibrary;
use crate::objective::{Workload, WorkloadMeta, PROB_SCALE};
use crate::seed::{rng_for, stream};

use super::{HarnessError, WorkloadConfig};

/// Per-user Zipf popularity over a user-specific random ranking of the
/// models, scaled so each user's probabilities sum to `active_prob` and
/// rounded to `prob_quantum`. Latency requirements and inference times are
/// uniform over their configured ranges. User `k` draws only from stream
/// `(seed, WORKLOAD, k)`.
pub fn generate_workload(
    cfg: &WorkloadConfig,
    users: usize,
    lib: &ModelLibrary,
    seed: u64,
) -> Result<Workload, HarnessError> {
    cfg.validate()?;
    let models = lib.num_models();
    if models == 0 {
        return Err(HarnessError::Config("workload needs at least one model".into()));
    }
    let harmonic: f64 = (1..=models).map(|r| (r as f64).powf(-cfg.zipf_s)).sum();
    let target = cfg.active_prob * PROB_SCALE as f64;
    let [t_lo, t_hi] = cfg.latency_req_s;
    let [i_lo, i_hi] = cfg.inference_range_s(lib);

    let mut prob = Vec::with_capacity(users * models);
    let mut deadline = Vec::with_capacity(users * models);
    let mut inference = Vec::with_capacity(users * models);
    for k in 0..users {
        let mut rng = rng_for(seed, &[stream::WORKLOAD, k as u64]);
        let mut ranking: Vec<usize> = (0..models).collect();
        ranking.shuffle(&mut rng);
        let mut row = vec![0u64; models];
        for (r, &i) in ranking.iter().enumerate() {
            row[i] = (target * ((r + 1) as f64).powf(-cfg.zipf_s) / harmonic).round() as u64;
        }
        quantize_row(&mut row, cfg.prob_quantum);
        prob.extend(row);
        for _ in 0..models {
            deadline.push(rng.random_range(t_lo..=t_hi));
            inference.push(rng.random_range(i_lo..=i_hi));
        }
    }
    Ok(Workload::new(
        users,
        models,
        prob,
        deadline,
        inference,
        WorkloadMeta {
            generator: "zipf".into(),
            zipf_s: Some(cfg.zipf_s),
            seed: Some(seed),
        },
    )?)
}

/// Rounds each entry to the nearest multiple of `quantum`, then trims the
/// largest entries until the row sums to at most one.
pub(crate) fn quantize_row(row: &mut [u64], quantum: u64) {
    for p in row.iter_mut() {
        *p = (*p + quantum / 2) / quantum * quantum;
    }
    let mut excess = row.iter().sum::<u64>().saturating_sub(PROB_SCALE);
    while excess > 0 {
        let i = (0..row.len()).max_by_key(|&i| (row[i], std::cmp::Reverse(i))).unwrap();
        let cut = excess.min(quantum).min(row[i]);
        row[i] -= cut;
        excess -= cut;
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::library::{generate_library, LibraryConfig};

    fn adapter_lib(models: usize) -> ModelLibrary {
        let LibraryConfig::Adapter(mut a) = LibraryConfig::gpt2_adapter() else { unreachable!() };
        a.backbones.truncate(1);
        a.backbones[0].models = models;
        generate_library(&LibraryConfig::Adapter(a), 1).unwrap()
    }

    #[test]
    fn zipf_ratio_and_normalization() {
        let lib = adapter_lib(100);
        let cfg = WorkloadConfig {
            prob_quantum: 1,
            ..WorkloadConfig::default()
        };
        let w = generate_workload(&cfg, 3, &lib, 9).unwrap();
        for k in 0..3 {
            let mut row = w.prob_row(k).to_vec();
            row.sort_unstable_by(|a, b| b.cmp(a));
            assert!((row[0] as f64 / row[1] as f64 - 2.0).abs() < 1e-4);
            let sum: u64 = row.iter().sum();
            assert!(sum.abs_diff(500_000) <= 100, "{sum}");
        }
    }

    #[test]
    fn small_skew_is_nearly_uniform() {
        let lib = adapter_lib(20);
        let cfg = WorkloadConfig {
            zipf_s: 1e-3,
            prob_quantum: 1,
            ..WorkloadConfig::default()
        };
        let w = generate_workload(&cfg, 1, &lib, 2).unwrap();
        let (lo, hi) = (w.prob_row(0).iter().min().unwrap(), w.prob_row(0).iter().max().unwrap());
        assert!((*hi as f64) / (*lo as f64) < 1.01);
    }

    #[test]
    fn ranges_and_quantum() {
        let lib = adapter_lib(30);
        let w = generate_workload(&WorkloadConfig::default(), 10, &lib, 4).unwrap();
        for k in 0..10 {
            for i in 0..30 {
                assert!((0.5..=1.0).contains(&w.latency_req(k, i)));
                assert!((0.040..=0.200).contains(&w.inference(k, i)));
                assert_eq!(w.prob(k, i) % 100, 0);
            }
        }
        let chain = generate_library(&LibraryConfig::resnet_two_stage(), 1).unwrap();
        let w = generate_workload(&WorkloadConfig::default(), 2, &chain, 4).unwrap();
        assert!((0.001..=0.005).contains(&w.inference(1, 3)));
    }

    #[test]
    fn quantized_rows_fit() {
        let mut row = vec![333_350, 333_350, 333_350];
        quantize_row(&mut row, 100);
        assert_eq!(row, vec![333_300, 333_300, 333_400]);
        let mut small = vec![40, 60, 149];
        quantize_row(&mut small, 100);
        assert_eq!(small, vec![0, 100, 100]);
    }

    #[test]
    fn users_nest() {
        let lib = adapter_lib(10);
        let a = generate_workload(&WorkloadConfig::default(), 5, &lib, 4).unwrap();
        let b = generate_workload(&WorkloadConfig::default(), 8, &lib, 4).unwrap();
        for k in 0..5 {
            assert_eq!(a.prob_row(k), b.prob_row(k));
            assert_eq!(a.latency_req(k, 3), b.latency_req(k, 3));
        }
    }
}
