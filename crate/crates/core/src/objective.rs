//! Placements, storage accounting and the cache hit-ratio objective.
//!
//! Request probabilities are integers in units of [`PROB_SCALE`]⁻¹ (one
//! micro-unit), so every hit count below is an exact integer and the
//! per-server decomposition of the objective holds with `==`.

use fixedbitset::FixedBitSet;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::library::ModelLibrary;
use crate::network::{bytes_to_bits, RateTable, Topology};

/// Probability resolution: `1` unit = `1e-6`.
pub const PROB_SCALE: u64 = 1_000_000;

pub const WORKLOAD_FORMAT: &str = "pscache-workload";
pub const WORKLOAD_FORMAT_VERSION: u32 = 1;

#[derive(Debug, Error, PartialEq)]
pub enum ObjectiveError {
    #[error("shape mismatch: {0}")]
    Shape(String),
    #[error("workload has zero total request probability")]
    ZeroDemand,
    #[error("epsilon must lie in [0, 1], got {0}")]
    InvalidEpsilon(f64),
    #[error("invalid workload: {0}")]
    InvalidWorkload(String),
    #[error("workload file: {0}")]
    Format(String),
}

/// Generator metadata carried with a workload.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct WorkloadMeta {
    pub generator: String,
    pub zipf_s: Option<f64>,
    pub seed: Option<u64>,
}

/// Per-(user, model) request probabilities, latency requirements and
/// on-device inference times. Matrices are `K × I`, row-major by user.
#[derive(Debug, Clone, PartialEq)]
pub struct Workload {
    users: usize,
    models: usize,
    prob: Vec<u64>,
    latency_req: Vec<f64>,
    inference: Vec<f64>,
    meta: WorkloadMeta,
}

impl Workload {
    /// `latency_req` may hold `f64::INFINITY` (no deadline).
    pub fn new(
        users: usize,
        models: usize,
        prob: Vec<u64>,
        latency_req: Vec<f64>,
        inference: Vec<f64>,
        meta: WorkloadMeta,
    ) -> Result<Self, ObjectiveError> {
        let n = users * models;
        for (name, len) in [("prob", prob.len()), ("latency_req", latency_req.len()), ("inference", inference.len())] {
            if len != n {
                return Err(ObjectiveError::Shape(format!("{name} has {len} entries, expected {users}×{models}")));
            }
        }
        if let Some(t) = latency_req.iter().find(|t| !(**t > 0.0)) {
            return Err(ObjectiveError::InvalidWorkload(format!("latency requirement {t} is not positive")));
        }
        if let Some(t) = inference.iter().find(|t| !(t.is_finite() && **t > 0.0)) {
            return Err(ObjectiveError::InvalidWorkload(format!("inference time {t} is not finite and positive")));
        }
        if models > 0 {
            for (k, row) in prob.chunks(models).enumerate() {
                let sum: u64 = row.iter().sum();
                if sum > PROB_SCALE {
                    return Err(ObjectiveError::InvalidWorkload(format!(
                        "user {k} request probabilities sum to {sum} > {PROB_SCALE}"
                    )));
                }
            }
        }
        Ok(Self {
            users,
            models,
            prob,
            latency_req,
            inference,
            meta,
        })
    }

    pub fn users(&self) -> usize {
        self.users
    }

    pub fn models(&self) -> usize {
        self.models
    }

    pub fn meta(&self) -> &WorkloadMeta {
        &self.meta
    }

    pub fn prob(&self, user: usize, model: usize) -> u64 {
        self.prob[user * self.models + model]
    }

    pub fn prob_row(&self, user: usize) -> &[u64] {
        &self.prob[user * self.models..(user + 1) * self.models]
    }

    pub fn latency_req(&self, user: usize, model: usize) -> f64 {
        self.latency_req[user * self.models + model]
    }

    pub fn inference(&self, user: usize, model: usize) -> f64 {
        self.inference[user * self.models + model]
    }

    /// `Σ_{k,i} p_{k,i}` in micro-units.
    pub fn total_mass(&self) -> u64 {
        self.prob.iter().sum()
    }

    /// Same deadlines and inference times with a different probability
    /// matrix.
    pub fn with_probabilities(&self, prob: Vec<u64>) -> Result<Self, ObjectiveError> {
        Self::new(
            self.users,
            self.models,
            prob,
            self.latency_req.clone(),
            self.inference.clone(),
            self.meta.clone(),
        )
    }

    /// Same probabilities with every latency requirement replaced.
    pub fn with_latency_requirement(&self, seconds: f64) -> Result<Self, ObjectiveError> {
        Self::new(
            self.users,
            self.models,
            self.prob.clone(),
            vec![seconds; self.latency_req.len()],
            self.inference.clone(),
            self.meta.clone(),
        )
    }

    pub fn to_json(&self) -> String {
        let rows = |v: &[f64]| v.chunks(self.models.max(1)).map(|r| r.to_vec()).collect::<Vec<_>>();
        let doc = WorkloadDoc {
            format: WORKLOAD_FORMAT.into(),
            version: WORKLOAD_FORMAT_VERSION,
            users: self.users,
            models: self.models,
            meta: self.meta.clone(),
            prob_micro: self.prob.chunks(self.models.max(1)).map(|r| r.to_vec()).collect(),
            latency_req_s: rows(&self.latency_req)
                .into_iter()
                .map(|r| r.into_iter().map(|t| t.is_finite().then_some(t)).collect())
                .collect(),
            inference_s: rows(&self.inference),
        };
        let mut s = serde_json::to_string_pretty(&doc).expect("workload serializes");
        s.push('\n');
        s
    }

    pub fn from_json(text: &str) -> Result<Self, ObjectiveError> {
        let doc: WorkloadDoc = serde_json::from_str(text).map_err(|e| ObjectiveError::Format(e.to_string()))?;
        if doc.format != WORKLOAD_FORMAT || doc.version != WORKLOAD_FORMAT_VERSION {
            return Err(ObjectiveError::Format(format!(
                "expected {WORKLOAD_FORMAT} v{WORKLOAD_FORMAT_VERSION}, found {} v{}",
                doc.format, doc.version
            )));
        }
        let flat_rows = |rows: usize| {
            if rows != doc.users {
                Err(ObjectiveError::Shape(format!("{rows} rows, expected {}", doc.users)))
            } else {
                Ok(())
            }
        };
        flat_rows(doc.prob_micro.len())?;
        flat_rows(doc.latency_req_s.len())?;
        flat_rows(doc.inference_s.len())?;
        Self::new(
            doc.users,
            doc.models,
            doc.prob_micro.into_iter().flatten().collect(),
            doc.latency_req_s.into_iter().flatten().map(|t| t.unwrap_or(f64::INFINITY)).collect(),
            doc.inference_s.into_iter().flatten().collect(),
            doc.meta,
        )
    }
}

/// On-disk workload; `null` latency requirements mean "no deadline".
#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct WorkloadDoc {
    format: String,
    version: u32,
    users: usize,
    models: usize,
    meta: WorkloadMeta,
    prob_micro: Vec<Vec<u64>>,
    latency_req_s: Vec<Vec<Option<f64>>>,
    inference_s: Vec<Vec<f64>>,
}

/// Binary `M × I` placement matrix.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct Placement {
    servers: usize,
    models: usize,
    bits: FixedBitSet,
}

impl Placement {
    pub fn empty(servers: usize, models: usize) -> Self {
        Self {
            servers,
            models,
            bits: FixedBitSet::with_capacity(servers * models),
        }
    }

    pub fn servers(&self) -> usize {
        self.servers
    }

    pub fn models(&self) -> usize {
        self.models
    }

    pub fn get(&self, server: usize, model: usize) -> bool {
        self.bits.contains(server * self.models + model)
    }

    pub fn set(&mut self, server: usize, model: usize, cached: bool) {
        self.bits.set(server * self.models + model, cached);
    }

    /// Models cached on `server`, ascending.
    pub fn row(&self, server: usize) -> impl Iterator<Item = usize> + '_ {
        (0..self.models).filter(move |&i| self.get(server, i))
    }

    pub fn count(&self) -> usize {
        self.bits.count_ones(..)
    }

    pub fn is_subset(&self, other: &Placement) -> bool {
        self.bits.is_subset(&other.bits)
    }

    /// Every `(server, model)` pair with `x = 1`, lexicographic.
    pub fn pairs(&self) -> impl Iterator<Item = (usize, usize)> + '_ {
        self.bits.ones().map(|b| (b / self.models, b % self.models))
    }
}

/// How cached models are charged against server capacity.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Accounting {
    /// Each block stored once per server.
    Shared,
    /// Each model stored in full, ignoring sharing.
    Independent,
}

impl Accounting {
    pub fn usage(self, lib: &ModelLibrary, x: &Placement, server: usize) -> u64 {
        match self {
            Accounting::Shared => storage_usage(lib, x, server),
            Accounting::Independent => independent_usage(lib, x, server),
        }
    }
}

/// `g_m`: bytes stored on `server`, each block counted once.
pub fn storage_usage(lib: &ModelLibrary, x: &Placement, server: usize) -> u64 {
    lib.storage_of(x.row(server))
}

/// `Σ_i x_{m,i} D_i`.
pub fn independent_usage(lib: &ModelLibrary, x: &Placement, server: usize) -> u64 {
    x.row(server).map(|i| lib.model_size(i)).sum()
}

/// First server whose usage exceeds its capacity, if any.
pub fn capacity_violation(
    lib: &ModelLibrary,
    topo: &Topology,
    x: &Placement,
    accounting: Accounting,
) -> Option<usize> {
    (0..x.servers()).find(|&m| accounting.usage(lib, x, m) > topo.servers[m].capacity_bytes)
}

pub fn is_feasible(lib: &ModelLibrary, topo: &Topology, x: &Placement) -> bool {
    capacity_violation(lib, topo, x, Accounting::Shared).is_none()
}

/// Which users each server can serve each model to within the deadline
/// (`I₁`), together with the request probabilities.
#[derive(Debug, Clone)]
pub struct HitModel {
    servers: usize,
    users: usize,
    models: usize,
    /// Indexed `m * I + i`; bit `k` set iff `I₁(m, k, i) = 1`.
    servable: Vec<FixedBitSet>,
    /// Indexed `i * K + k`.
    prob: Vec<u64>,
    total: u64,
}

impl HitModel {
    /// `I₁` under expected (mean-gain) link rates.
    pub fn new(lib: &ModelLibrary, topo: &Topology, wl: &Workload) -> Result<Self, ObjectiveError> {
        Self::with_rates(lib, wl, &RateTable::expected(topo))
    }

    /// `I₁` under an arbitrary rate table (e.g. one fading realization).
    pub fn with_rates(lib: &ModelLibrary, wl: &Workload, rates: &RateTable) -> Result<Self, ObjectiveError> {
        let (servers, users) = (rates.servers(), rates.users());
        if wl.models() != lib.num_models() {
            return Err(ObjectiveError::Shape(format!(
                "workload has {} models, library has {}",
                wl.models(),
                lib.num_models()
            )));
        }
        if wl.users() != users {
            return Err(ObjectiveError::Shape(format!(
                "workload has {} users, topology has {users}",
                wl.users()
            )));
        }
        let models = lib.num_models();
        let bits: Vec<f64> = (0..models).map(|i| bytes_to_bits(lib.model_size(i))).collect();
        let mut servable = vec![FixedBitSet::with_capacity(users); servers * models];
        for m in 0..servers {
            for k in 0..users {
                if rates.associated(k).is_empty() {
                    continue;
                }
                for i in 0..models {
                    let t = rates.latency(m, k, bits[i], wl.inference(k, i));
                    if t <= wl.latency_req(k, i) {
                        servable[m * models + i].insert(k);
                    }
                }
            }
        }
        let mut prob = vec![0; models * users];
        for k in 0..users {
            for i in 0..models {
                prob[i * users + k] = wl.prob(k, i);
            }
        }
        Ok(Self {
            servers,
            users,
            models,
            servable,
            total: wl.total_mass(),
            prob,
        })
    }

    pub fn servers(&self) -> usize {
        self.servers
    }

    pub fn users(&self) -> usize {
        self.users
    }

    pub fn models(&self) -> usize {
        self.models
    }

    /// `Σ p` in micro-units.
    pub fn total_mass(&self) -> u64 {
        self.total
    }

    pub fn prob(&self, user: usize, model: usize) -> u64 {
        self.prob[model * self.users + user]
    }

    /// `I₁(m, k, i)`.
    pub fn within_deadline(&self, server: usize, user: usize, model: usize) -> bool {
        self.servable[server * self.models + model].contains(user)
    }

    /// Users `m` can serve model `i` to within their deadline.
    pub fn servable(&self, server: usize, model: usize) -> &FixedBitSet {
        &self.servable[server * self.models + model]
    }

    fn mass_of(&self, model: usize, users: impl Iterator<Item = usize>) -> u64 {
        let p = &self.prob[model * self.users..(model + 1) * self.users];
        users.map(|k| p[k]).sum()
    }

    fn check_shape(&self, x: &Placement) {
        assert_eq!(
            (x.servers(), x.models()),
            (self.servers, self.models),
            "placement shape does not match the instance"
        );
    }

    /// Numerator of the hit ratio: probability mass of requests served by
    /// some caching server within the deadline.
    pub fn hit_mass(&self, x: &Placement) -> u64 {
        self.check_shape(x);
        let mut cov = Coverage::new(self);
        for (m, i) in x.pairs() {
            cov.add(m, i);
        }
        cov.mass()
    }

    pub fn ratio(&self, mass: u64) -> Result<f64, ObjectiveError> {
        if self.total == 0 {
            return Err(ObjectiveError::ZeroDemand);
        }
        Ok(mass as f64 / self.total as f64)
    }

    /// `U(X)`. Feasibility is not required.
    pub fn hit_ratio(&self, x: &Placement) -> Result<f64, ObjectiveError> {
        self.ratio(self.hit_mass(x))
    }

    /// `I₂(m, k, i)`: no server with a lower index caches `i` within the
    /// deadline of `k`.
    pub fn unserved(&self, x: &Placement, server: usize, user: usize, model: usize) -> bool {
        (0..server).all(|m| !(x.get(m, model) && self.within_deadline(m, user, model)))
    }

    /// `u(m, i) = Σ_k p_{k,i} I₁ I₂`, with `I₂` read from rows `< m` of `x`.
    pub fn cache_hits(&self, x: &Placement, server: usize, model: usize) -> u64 {
        let mut fresh = self.servable(server, model).clone();
        for m in 0..server {
            if x.get(m, model) {
                fresh.difference_with(self.servable(m, model));
            }
        }
        self.mass_of(model, fresh.ones())
    }

    /// Numerator of `Û_m`: hits of row `m` of `x` given rows `< m`.
    pub fn per_server_hits(&self, x: &Placement, server: usize) -> u64 {
        x.row(server).map(|i| self.cache_hits(x, server, i)).sum()
    }

    /// `Û_m` numerators for every server in index order.
    pub fn per_server_breakdown(&self, x: &Placement) -> Vec<u64> {
        (0..self.servers).map(|m| self.per_server_hits(x, m)).collect()
    }

    /// `U(ρ(X, m, i)) − U(X)` in micro-units.
    pub fn marginal_gain(&self, x: &Placement, server: usize, model: usize) -> u64 {
        if x.get(server, model) {
            return 0;
        }
        let mut fresh = self.servable(server, model).clone();
        for m in 0..self.servers {
            if x.get(m, model) {
                fresh.difference_with(self.servable(m, model));
            }
        }
        self.mass_of(model, fresh.ones())
    }
}

/// Incrementally maintained set of served (user, model) requests.
#[derive(Debug, Clone)]
pub struct Coverage<'a> {
    hm: &'a HitModel,
    /// Per model, users already served.
    covered: Vec<FixedBitSet>,
    mass: u64,
}

impl<'a> Coverage<'a> {
    pub fn new(hm: &'a HitModel) -> Self {
        Self {
            hm,
            covered: vec![FixedBitSet::with_capacity(hm.users); hm.models],
            mass: 0,
        }
    }

    pub fn mass(&self) -> u64 {
        self.mass
    }

    pub fn is_served(&self, user: usize, model: usize) -> bool {
        self.covered[model].contains(user)
    }

    /// Mass that caching `i` on `m` would add.
    pub fn gain(&self, server: usize, model: usize) -> u64 {
        let p = &self.hm.prob[model * self.hm.users..(model + 1) * self.hm.users];
        self.hm
            .servable(server, model)
            .difference(&self.covered[model])
            .map(|k| p[k])
            .sum()
    }

    /// Caches `i` on `m`; returns the mass added.
    pub fn add(&mut self, server: usize, model: usize) -> u64 {
        let g = self.gain(server, model);
        self.covered[model].union_with(self.hm.servable(server, model));
        self.mass += g;
        g
    }
}

/// Rounding parameter `ε`, held in micro-units so rounding is exact.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Default)]
pub struct Epsilon(u64);

impl Epsilon {
    pub const ZERO: Epsilon = Epsilon(0);

    pub fn new(value: f64) -> Result<Self, ObjectiveError> {
        if !(0.0..=1.0).contains(&value) {
            return Err(ObjectiveError::InvalidEpsilon(value));
        }
        Ok(Self((value * PROB_SCALE as f64).round() as u64))
    }

    pub fn micro(self) -> u64 {
        self.0
    }

    pub fn value(self) -> f64 {
        self.0 as f64 / PROB_SCALE as f64
    }
}

/// Rounded hit counts `u̇` and their common granularity `δ̇`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RoundedHits {
    pub values: Vec<u64>,
    /// gcd of the positive values (1 when there are none).
    pub granularity: u64,
}

fn gcd(mut a: u64, mut b: u64) -> u64 {
    while b != 0 {
        (a, b) = (b, a % b);
    }
    a
}

/// `u̇ = ⌊u / (ε u_min)⌋`, with `u_min` the smallest positive `u`; identity
/// when `ε = 0`. Zero values stay zero.
pub fn round_hits(u: &[u64], eps: Epsilon) -> RoundedHits {
    let values: Vec<u64> = match u.iter().copied().filter(|&v| v > 0).min() {
        Some(u_min) if eps.micro() > 0 => {
            let denom = eps.micro() as u128 * u_min as u128;
            u.iter()
                .map(|&v| ((v as u128 * PROB_SCALE as u128) / denom) as u64)
                .collect()
        }
        _ => u.to_vec(),
    };
    let granularity = values.iter().fold(0, |g, &v| gcd(g, v)).max(1);
    RoundedHits { values, granularity }
}

#[cfg(test)]
pub(crate) mod tests {
    use super::*;
    use crate::library::tests::lib;
    use crate::network::{dbm_to_watts, Area, ChannelParams, EdgeServer, MobilityPattern, Point, UserNode};
    use proptest::prelude::*;

    pub(crate) fn server(x: f64, y: f64, capacity_bytes: u64) -> EdgeServer {
        EdgeServer {
            id: format!("s{x}-{y}"),
            position: Point { x, y },
            capacity_bytes,
            coverage_radius_m: 275.0,
            bandwidth_hz: 400e6,
            power_w: dbm_to_watts(43.0),
        }
    }

    pub(crate) fn user(x: f64, y: f64) -> UserNode {
        UserNode {
            id: format!("u{x}-{y}"),
            position: Point { x, y },
            speed_mps: 0.0,
            heading_rad: 0.0,
            pattern: MobilityPattern::Static,
        }
    }

    pub(crate) fn topo(servers: Vec<EdgeServer>, users: Vec<UserNode>) -> Topology {
        Topology {
            area: Area::square(1000.0),
            channel: ChannelParams::default(),
            servers,
            users,
        }
    }

    /// Uniform deadlines and inference times; `prob` row-major by user.
    pub(crate) fn workload(users: usize, models: usize, prob: Vec<u64>, deadline: f64) -> Workload {
        let n = users * models;
        Workload::new(users, models, prob, vec![deadline; n], vec![0.001; n], WorkloadMeta::default()).unwrap()
    }

    fn two_block_lib() -> ModelLibrary {
        lib(&[("b1", 100), ("b2", 50), ("b3", 30)], &[("A", &["b1", "b2"]), ("B", &["b1", "b3"])])
    }

    #[test]
    fn storage_counts_shared_once() {
        let l = two_block_lib();
        let mut x = Placement::empty(1, 2);
        assert_eq!(storage_usage(&l, &x, 0), 0);
        x.set(0, 0, true);
        assert_eq!(storage_usage(&l, &x, 0), 150);
        x.set(0, 1, true);
        assert_eq!(storage_usage(&l, &x, 0), 180);
        assert_eq!(independent_usage(&l, &x, 0), 280);
    }

    #[test]
    fn single_user_two_models() {
        let l = lib(&[("a", 10), ("b", 10)], &[("A", &["a"]), ("B", &["b"])]);
        let t = topo(vec![server(0.0, 0.0, 100)], vec![user(10.0, 0.0)]);
        let w = workload(1, 2, vec![600_000, 400_000], 1.0);
        let hm = HitModel::new(&l, &t, &w).unwrap();
        let mut x = Placement::empty(1, 2);
        assert_eq!(hm.hit_ratio(&x).unwrap(), 0.0);
        x.set(0, 0, true);
        assert_eq!(hm.hit_ratio(&x).unwrap(), 0.6);
        x.set(0, 1, true);
        assert_eq!(hm.hit_ratio(&x).unwrap(), 1.0);
    }

    #[test]
    fn zero_demand_is_an_error() {
        let l = lib(&[("a", 10)], &[("A", &["a"])]);
        let t = topo(vec![server(0.0, 0.0, 100)], vec![user(10.0, 0.0)]);
        let hm = HitModel::new(&l, &t, &workload(1, 1, vec![0], 1.0)).unwrap();
        assert_eq!(hm.hit_ratio(&Placement::empty(1, 1)), Err(ObjectiveError::ZeroDemand));
    }

    #[test]
    fn deadline_gates_hits() {
        let l = lib(&[("a", 10)], &[("A", &["a"])]);
        let t = topo(vec![server(0.0, 0.0, 100)], vec![user(10.0, 0.0)]);
        // Inference alone (1 ms) exceeds a 0.5 ms deadline.
        let hm = HitModel::new(&l, &t, &workload(1, 1, vec![500_000], 0.0005)).unwrap();
        let mut x = Placement::empty(1, 1);
        x.set(0, 0, true);
        assert_eq!(hm.hit_mass(&x), 0);
        assert_eq!(hm.marginal_gain(&Placement::empty(1, 1), 0, 0), 0);
    }

    /// Three servers all covering two users, three single-block models.
    fn shared_cell() -> (ModelLibrary, Topology, Workload) {
        let l = lib(&[("a", 10), ("b", 20), ("c", 30)], &[("A", &["a"]), ("B", &["b"]), ("C", &["c"])]);
        let t = topo(
            vec![server(0.0, 0.0, 100), server(50.0, 0.0, 100), server(0.0, 50.0, 100)],
            vec![user(10.0, 10.0), user(20.0, 20.0)],
        );
        let w = workload(2, 3, vec![120_000, 30_000, 10_000, 140_000, 0, 50_000], 1.0);
        (l, t, w)
    }

    #[test]
    fn unserved_indicator_cases() {
        let (l, t, w) = shared_cell();
        let hm = HitModel::new(&l, &t, &w).unwrap();
        let mut x = Placement::empty(3, 3);
        assert!(hm.unserved(&x, 0, 0, 0));
        x.set(0, 0, true);
        assert!(hm.unserved(&x, 0, 0, 0));
        assert!(!hm.unserved(&x, 1, 0, 0));
        assert!(hm.unserved(&x, 1, 0, 1));
    }

    #[test]
    fn unserved_when_earlier_servers_miss_deadline() {
        // Server 0 is far from the user, so relayed delivery is slow.
        let l = lib(&[("a", 400_000_000)], &[("A", &["a"])]);
        let t = topo(vec![server(900.0, 900.0, u64::MAX), server(0.0, 0.0, u64::MAX)], vec![user(200.0, 0.0)]);
        let w = workload(1, 1, vec![500_000], 0.5);
        let hm = HitModel::new(&l, &t, &w).unwrap();
        assert!(!hm.within_deadline(0, 0, 0));
        assert!(hm.within_deadline(1, 0, 0));
        let mut x = Placement::empty(2, 1);
        x.set(0, 0, true);
        assert!(hm.unserved(&x, 1, 0, 0));
    }

    #[test]
    fn cache_hits_counts_two_users() {
        let (l, t, w) = shared_cell();
        let hm = HitModel::new(&l, &t, &w).unwrap();
        let mut x = Placement::empty(3, 3);
        assert_eq!(hm.cache_hits(&x, 0, 0), 260_000);
        x.set(0, 0, true);
        assert_eq!(hm.cache_hits(&x, 1, 0), 0);
        assert_eq!(hm.marginal_gain(&x, 0, 0), 0);
        assert_eq!(hm.marginal_gain(&x, 1, 0), 0);
        assert_eq!(hm.marginal_gain(&x, 1, 2), 60_000);
    }

    #[test]
    fn no_covered_users_means_no_hits() {
        let l = lib(&[("a", 10)], &[("A", &["a"])]);
        let t = topo(vec![server(0.0, 0.0, 100)], vec![user(900.0, 900.0)]);
        let hm = HitModel::new(&l, &t, &workload(1, 1, vec![1000], f64::INFINITY)).unwrap();
        assert_eq!(hm.cache_hits(&Placement::empty(1, 1), 0, 0), 0);
    }

    #[test]
    fn rounding_cases() {
        let eps = Epsilon::new(0.1).unwrap();
        let r = round_hits(&[370_000, 100_000, 0], eps);
        assert_eq!(r.values, vec![37, 10, 0]);
        assert_eq!(r.granularity, 1);
        let id = round_hits(&[370_000, 100_000], Epsilon::ZERO);
        assert_eq!(id.values, vec![370_000, 100_000]);
        assert_eq!(id.granularity, 10_000);
        let one = round_hits(&[5, 9], Epsilon::new(1.0).unwrap());
        assert_eq!(one.values[0], 1);
        assert!(Epsilon::new(1.5).is_err());
        assert!(Epsilon::new(-0.1).is_err());
        assert_eq!(round_hits(&[], eps).granularity, 1);
    }

    #[test]
    fn workload_validation_and_round_trip() {
        assert!(matches!(
            Workload::new(1, 2, vec![700_000, 400_000], vec![1.0; 2], vec![0.1; 2], WorkloadMeta::default()),
            Err(ObjectiveError::InvalidWorkload(_))
        ));
        assert!(matches!(
            Workload::new(1, 2, vec![1], vec![1.0; 2], vec![0.1; 2], WorkloadMeta::default()),
            Err(ObjectiveError::Shape(_))
        ));
        let w = Workload::new(
            2,
            2,
            vec![1, 2, 3, 4],
            vec![0.5, f64::INFINITY, 0.7, 0.9],
            vec![0.001, 0.002, 0.003, 0.004],
            WorkloadMeta {
                generator: "test".into(),
                zipf_s: Some(1.0),
                seed: Some(3),
            },
        )
        .unwrap();
        let text = w.to_json();
        assert!(text.contains("null"));
        assert_eq!(Workload::from_json(&text).unwrap(), w);
    }

    /// Random instance with `servers * models <= 12`.
    pub(crate) fn arb_instance() -> impl Strategy<Value = (ModelLibrary, Topology, Workload)> {
        (1usize..=3, 1usize..=4, 1usize..=6, any::<u64>()).prop_map(|(m, i, k, seed)| {
            crate::objective::tests::random_instance(m, i.min(12 / m), k, seed)
        })
    }

    /// A small random instance with sharing, tight capacities and mixed
    /// deadlines.
    pub(crate) fn random_instance(servers: usize, models: usize, users: usize, seed: u64) -> (ModelLibrary, Topology, Workload) {
        use rand::Rng;
        let mut rng = crate::seed::rng_for(seed, &[0xABCD]);
        let shared = ["s0", "s1", "s2"];
        let mut blocks: Vec<(String, u64)> =
            shared.iter().map(|s| (s.to_string(), rng.random_range(1..40) * 1_000_000)).collect();
        let mut model_blocks = Vec::new();
        for n in 0..models {
            let mut ids: Vec<String> = shared.iter().filter(|_| rng.random_bool(0.5)).map(|s| s.to_string()).collect();
            let own = format!("p{n}");
            blocks.push((own.clone(), rng.random_range(1..40) * 1_000_000));
            ids.push(own);
            model_blocks.push((format!("m{n}"), ids));
        }
        let b: Vec<(&str, u64)> = blocks.iter().map(|(s, z)| (s.as_str(), *z)).collect();
        let mm: Vec<(&str, Vec<&str>)> =
            model_blocks.iter().map(|(s, v)| (s.as_str(), v.iter().map(|x| x.as_str()).collect())).collect();
        let m2: Vec<(&str, &[&str])> = mm.iter().map(|(s, v)| (*s, v.as_slice())).collect();
        let l = lib(&b, &m2);
        let servers_v = (0..servers)
            .map(|_| server(rng.random_range(300.0..700.0), rng.random_range(300.0..700.0), rng.random_range(20..120) * 1_000_000))
            .collect();
        let users_v = (0..users)
            .map(|_| user(rng.random_range(250.0..750.0), rng.random_range(250.0..750.0)))
            .collect();
        let t = topo(servers_v, users_v);
        let prob = (0..users * models).map(|_| rng.random_range(0..100) * 1000).collect();
        let deadline = (0..users * models).map(|_| rng.random_range(0.05..0.6)).collect();
        let w = Workload::new(users, models, prob, deadline, vec![0.002; users * models], WorkloadMeta::default())
            .unwrap();
        (l, t, w)
    }

    fn bits_to_placement(servers: usize, models: usize, bits: u32) -> Placement {
        let mut x = Placement::empty(servers, models);
        for b in 0..servers * models {
            if bits >> b & 1 == 1 {
                x.set(b / models, b % models, true);
            }
        }
        x
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(64))]

        #[test]
        fn hit_ratio_is_monotone_submodular_and_decomposes(
            (l, t, w) in arb_instance(), s_bits in any::<u32>(), extra in any::<u32>(), e in any::<usize>()
        ) {
            let (ms, is) = (t.num_servers(), l.num_models());
            let n = ms * is;
            let mask = (1u32 << n) - 1;
            let s = bits_to_placement(ms, is, s_bits & mask);
            let big = bits_to_placement(ms, is, (s_bits | extra) & mask);
            let hm = HitModel::new(&l, &t, &w).unwrap();
            prop_assert!(hm.hit_mass(&s) <= hm.hit_mass(&big));
            let (m, i) = ((e % n) / is, (e % n) % is);
            if !big.get(m, i) {
                prop_assert!(hm.marginal_gain(&s, m, i) >= hm.marginal_gain(&big, m, i));
            }
            let mut plus = s.clone();
            plus.set(m, i, true);
            prop_assert_eq!(hm.hit_mass(&plus) - hm.hit_mass(&s), hm.marginal_gain(&s, m, i));
            // Σ_m Û_m equals U exactly.
            prop_assert_eq!(hm.per_server_breakdown(&big).iter().sum::<u64>(), hm.hit_mass(&big));
            // Storage: submodular, dominated by independent accounting.
            for m in 0..ms {
                let g = |x: &Placement| storage_usage(&l, x, m);
                prop_assert!(g(&s) <= independent_usage(&l, &s, m));
                if !big.get(m, i) {
                    let mut sp = s.clone();
                    sp.set(m, i, true);
                    let mut bp = big.clone();
                    bp.set(m, i, true);
                    prop_assert!(g(&sp) - g(&s) >= g(&bp) - g(&big));
                }
            }
        }

        #[test]
        fn hit_ratio_invariant_under_server_permutation((l, t, w) in arb_instance(), bits in any::<u32>()) {
            let (ms, is) = (t.num_servers(), l.num_models());
            let x = bits_to_placement(ms, is, bits & ((1u32 << (ms * is)) - 1));
            let hm = HitModel::new(&l, &t, &w).unwrap();
            let mut rt = t.clone();
            rt.servers.reverse();
            let mut rx = Placement::empty(ms, is);
            for (m, i) in x.pairs() {
                rx.set(ms - 1 - m, i, true);
            }
            prop_assert_eq!(HitModel::new(&l, &rt, &w).unwrap().hit_mass(&rx), hm.hit_mass(&x));
        }
    }
}
