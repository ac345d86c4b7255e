//! Slotted online caching with LRU or LFU eviction.
//!
//! Each slot, every user issues at most one request drawn from its request
//! probabilities. Requests are scored against the caches as they stand at
//! the start of the slot; at the end of the slot each missed request is
//! admitted (evicting whole models until the sharing-aware usage fits).

use std::str::FromStr;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::library::ModelLibrary;
use crate::network::Topology;
use crate::objective::{HitModel, Placement, Workload, PROB_SCALE};
use crate::seed::{rng_for, stream};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum OnlinePolicy {
    Lru,
    Lfu,
}

impl FromStr for OnlinePolicy {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "lru" => Ok(OnlinePolicy::Lru),
            "lfu" => Ok(OnlinePolicy::Lfu),
            other => Err(format!("unknown online policy `{other}`")),
        }
    }
}

/// Where a missed request is admitted.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Admission {
    /// The closest server covering the requester.
    #[default]
    Nearest,
    /// Every server covering the requester.
    AllAssociated,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct OnlineConfig {
    pub policy: OnlinePolicy,
    pub admission: Admission,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Request {
    pub user: usize,
    pub model: usize,
}

/// Per-slot request lists. User `k` in slot `s` draws from its own stream,
/// so traces are shared across policies and nest in `K`.
pub fn draw_requests(wl: &Workload, slots: usize, seed: u64) -> Vec<Vec<Request>> {
    (0..slots)
        .map(|s| {
            (0..wl.users())
                .filter_map(|k| {
                    let mut rng = rng_for(seed, &[stream::ONLINE, s as u64, k as u64]);
                    let mut draw = rng.random_range(0..PROB_SCALE);
                    for (i, &p) in wl.prob_row(k).iter().enumerate() {
                        if draw < p {
                            return Some(Request { user: k, model: i });
                        }
                        draw -= p;
                    }
                    None
                })
                .collect()
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct OnlineRun {
    /// Fraction of the slot's requests that hit; 0 for a slot without
    /// requests.
    pub series: Vec<f64>,
    /// Cache contents after the last slot.
    pub final_placement: Placement,
    /// Largest sharing-aware usage seen on each server.
    pub peak_usage: Vec<u64>,
}

fn slot_ratio(hits: usize, requests: usize) -> f64 {
    if requests == 0 {
        0.0
    } else {
        hits as f64 / requests as f64
    }
}

/// Closest caching server able to serve the request within its deadline.
fn serving_server(topo: &Topology, hm: &HitModel, x: &Placement, r: Request) -> Option<usize> {
    (0..topo.num_servers())
        .filter(|&m| x.get(m, r.model) && hm.within_deadline(m, r.user, r.model))
        .min_by(|&a, &b| topo.distance(a, r.user).total_cmp(&topo.distance(b, r.user)))
}

/// Hit-ratio series of a fixed placement over a request trace.
pub fn static_series(topo: &Topology, hm: &HitModel, x: &Placement, trace: &[Vec<Request>]) -> Vec<f64> {
    trace
        .iter()
        .map(|slot| {
            let hits = slot.iter().filter(|&&r| serving_server(topo, hm, x, r).is_some()).count();
            slot_ratio(hits, slot.len())
        })
        .collect()
}

struct Cache {
    /// Last request time per model; `None` when not cached (LRU state is
    /// dropped on eviction).
    last_use: Vec<Option<u64>>,
    /// Request count per model, kept across evictions.
    uses: Vec<u64>,
}

/// Runs an LRU or LFU cache over `trace`, starting from empty caches.
pub fn simulate_online(
    lib: &ModelLibrary,
    topo: &Topology,
    hm: &HitModel,
    trace: &[Vec<Request>],
    cfg: OnlineConfig,
) -> OnlineRun {
    let (servers, models) = (topo.num_servers(), lib.num_models());
    let mut x = Placement::empty(servers, models);
    let mut caches: Vec<Cache> = (0..servers)
        .map(|_| Cache {
            last_use: vec![None; models],
            uses: vec![0; models],
        })
        .collect();
    let mut peak_usage = vec![0u64; servers];
    let mut clock = 0u64;
    let mut series = Vec::with_capacity(trace.len());

    for slot in trace {
        let mut hits = 0;
        let mut misses = Vec::new();
        for &r in slot {
            clock += 1;
            match serving_server(topo, hm, &x, r) {
                Some(m) => {
                    hits += 1;
                    caches[m].last_use[r.model] = Some(clock);
                    caches[m].uses[r.model] += 1;
                }
                None => misses.push((clock, r)),
            }
        }
        series.push(slot_ratio(hits, slot.len()));

        for (stamp, r) in misses {
            let targets = match cfg.admission {
                Admission::Nearest => topo.nearest_associated(r.user).into_iter().collect(),
                Admission::AllAssociated => topo.associated_servers(r.user),
            };
            for m in targets {
                let cache = &mut caches[m];
                cache.uses[r.model] += 1;
                if x.get(m, r.model) {
                    cache.last_use[r.model] = Some(stamp);
                    continue;
                }
                let capacity = topo.servers[m].capacity_bytes;
                if lib.model_size(r.model) > capacity {
                    continue;
                }
                x.set(m, r.model, true);
                cache.last_use[r.model] = Some(stamp);
                while lib.storage_of(x.row(m)) > capacity {
                    let victim = x
                        .row(m)
                        .filter(|&i| i != r.model)
                        .min_by_key(|&i| match cfg.policy {
                            OnlinePolicy::Lru => (cache.last_use[i].unwrap_or(0), i as u64),
                            OnlinePolicy::Lfu => (cache.uses[i], i as u64),
                        })
                        .expect("a model that fits alone leaves something to evict");
                    x.set(m, victim, false);
                    cache.last_use[victim] = None;
                }
                peak_usage[m] = peak_usage[m].max(lib.storage_of(x.row(m)));
            }
        }
    }
    OnlineRun {
        series,
        final_placement: x,
        peak_usage,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::library::tests::lib;
    use crate::objective::tests::{random_instance, server, topo, user, workload};
    use crate::objective::storage_usage;
    use proptest::prelude::*;

    fn lru() -> OnlineConfig {
        OnlineConfig {
            policy: OnlinePolicy::Lru,
            admission: Admission::Nearest,
        }
    }

    #[test]
    fn cold_start_first_slot_is_zero() {
        let (l, t, w) = random_instance(2, 4, 6, 9);
        let hm = HitModel::new(&l, &t, &w).unwrap();
        let trace = draw_requests(&w, 1, 3);
        for policy in [OnlinePolicy::Lru, OnlinePolicy::Lfu] {
            let run = simulate_online(&l, &t, &hm, &trace, OnlineConfig { policy, admission: Admission::Nearest });
            assert_eq!(run.series, vec![0.0]);
        }
    }

    #[test]
    fn alternating_requests_thrash_lru() {
        let l = lib(&[("a", 10), ("b", 10)], &[("A", &["a"]), ("B", &["b"])]);
        let t = topo(vec![server(0.0, 0.0, 10)], vec![user(10.0, 0.0)]);
        let w = workload(1, 2, vec![250_000, 250_000], 1.0);
        let hm = HitModel::new(&l, &t, &w).unwrap();
        let trace: Vec<Vec<Request>> =
            [0, 1, 0, 1].iter().map(|&model| vec![Request { user: 0, model }]).collect();
        let run = simulate_online(&l, &t, &hm, &trace, lru());
        assert_eq!(run.series, vec![0.0; 4]);
    }

    #[test]
    fn lfu_keeps_the_popular_model_where_lru_does_not() {
        let l = lib(&[("a", 10), ("b", 10), ("c", 10)], &[("A", &["a"]), ("B", &["b"]), ("C", &["c"])]);
        let t = topo(vec![server(0.0, 0.0, 20)], vec![user(10.0, 0.0)]);
        let w = workload(1, 3, vec![100_000; 3], 1.0);
        let hm = HitModel::new(&l, &t, &w).unwrap();
        let trace: Vec<Vec<Request>> =
            [0, 0, 1, 2, 0].iter().map(|&model| vec![Request { user: 0, model }]).collect();
        let lfu = OnlineConfig {
            policy: OnlinePolicy::Lfu,
            admission: Admission::Nearest,
        };
        assert_eq!(simulate_online(&l, &t, &hm, &trace, lfu).series, vec![0.0, 1.0, 0.0, 0.0, 1.0]);
        assert_eq!(simulate_online(&l, &t, &hm, &trace, lru()).series, vec![0.0, 1.0, 0.0, 0.0, 0.0]);
    }

    #[test]
    fn shared_blocks_let_two_models_fit() {
        let l = lib(&[("s", 8), ("a", 1), ("b", 1)], &[("A", &["s", "a"]), ("B", &["s", "b"])]);
        let t = topo(vec![server(0.0, 0.0, 10)], vec![user(10.0, 0.0)]);
        let w = workload(1, 2, vec![250_000, 250_000], 1.0);
        let hm = HitModel::new(&l, &t, &w).unwrap();
        let trace: Vec<Vec<Request>> =
            [0, 1, 0, 1].iter().map(|&model| vec![Request { user: 0, model }]).collect();
        let run = simulate_online(&l, &t, &hm, &trace, lru());
        assert_eq!(run.series, vec![0.0, 0.0, 1.0, 1.0]);
    }

    #[test]
    fn oversize_model_is_never_admitted() {
        let l = lib(&[("a", 50)], &[("A", &["a"])]);
        let t = topo(vec![server(0.0, 0.0, 10)], vec![user(10.0, 0.0)]);
        let w = workload(1, 1, vec![500_000], 1.0);
        let hm = HitModel::new(&l, &t, &w).unwrap();
        let trace = vec![vec![Request { user: 0, model: 0 }]; 3];
        let run = simulate_online(&l, &t, &hm, &trace, lru());
        assert_eq!(run.final_placement.count(), 0);
    }

    #[test]
    fn request_rate_matches_activity() {
        let (_, _, w) = random_instance(1, 4, 6, 2);
        let expected = w.total_mass() as f64 / PROB_SCALE as f64;
        let trace = draw_requests(&w, 4000, 8);
        let mean = trace.iter().map(|s| s.len()).sum::<usize>() as f64 / 4000.0;
        assert!((mean - expected).abs() < 0.1, "{mean} vs {expected}");
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(48))]

        #[test]
        fn caches_never_overflow(seed in any::<u64>(), servers in 1usize..=4, models in 1usize..=8, all in any::<bool>()) {
            let (l, t, w) = random_instance(servers, models, 6, seed);
            let hm = HitModel::new(&l, &t, &w).unwrap();
            let trace = draw_requests(&w, 40, seed);
            for policy in [OnlinePolicy::Lru, OnlinePolicy::Lfu] {
                let admission = if all { Admission::AllAssociated } else { Admission::Nearest };
                let run = simulate_online(&l, &t, &hm, &trace, OnlineConfig { policy, admission });
                for m in 0..servers {
                    prop_assert!(run.peak_usage[m] <= t.servers[m].capacity_bytes);
                    prop_assert!(storage_usage(&l, &run.final_placement, m) <= t.servers[m].capacity_bytes);
                }
                prop_assert!(run.series.iter().all(|r| (0.0..=1.0).contains(r)));
            }
        }
    }
}
