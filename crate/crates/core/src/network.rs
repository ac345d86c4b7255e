//! Wireless edge topology: geometry, coverage, link rates, end-to-end
//! latency, Rayleigh fading and user mobility.
//!
//! Units: meters, seconds, hertz, watts, bits per second. Model sizes are
//! bytes everywhere else in the crate; [`bytes_to_bits`] is the single place
//! where they are converted for transfer-time arithmetic.

use std::f64::consts::PI;
use std::fmt;
use std::str::FromStr;

use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::library::ModelLibrary;
use crate::seed::{rng_for, stream};

/// Links shorter than this are evaluated at this distance, keeping the
/// path-loss term finite for co-located nodes.
pub const MIN_LINK_DISTANCE_M: f64 = 1.0;

pub const TOPOLOGY_FORMAT: &str = "pscache-topology";
pub const TOPOLOGY_FORMAT_VERSION: u32 = 1;

#[inline]
pub fn bytes_to_bits(bytes: u64) -> f64 {
    bytes as f64 * 8.0
}

pub fn dbm_to_watts(dbm: f64) -> f64 {
    10f64.powf((dbm - 30.0) / 10.0)
}

#[derive(Debug, Error, PartialEq)]
pub enum NetworkError {
    #[error("area must have positive width and height")]
    ZeroArea,
    #[error("server {server} does not cover user {user}")]
    NotAssociated { server: usize, user: usize },
    #[error("fading draw must be non-negative, got {0}")]
    NegativeFading(f64),
    #[error("invalid channel parameters: {0}")]
    InvalidChannel(String),
    #[error("invalid server `{id}`: {reason}")]
    InvalidServer { id: String, reason: String },
    #[error("user `{0}` lies outside the area")]
    UserOutsideArea(String),
    #[error("unknown mobility pattern `{0}`")]
    UnknownPattern(String),
    #[error("time step must be positive, got {0}")]
    InvalidTimeStep(f64),
    #[error("topology file: {0}")]
    Format(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Point {
    pub x: f64,
    pub y: f64,
}

impl Point {
    pub fn distance(self, other: Point) -> f64 {
        (self.x - other.x).hypot(self.y - other.y)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Area {
    pub width_m: f64,
    pub height_m: f64,
}

impl Area {
    pub fn square(side_m: f64) -> Self {
        Self {
            width_m: side_m,
            height_m: side_m,
        }
    }

    pub fn contains(&self, p: Point) -> bool {
        (0.0..=self.width_m).contains(&p.x) && (0.0..=self.height_m).contains(&p.y)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EdgeServer {
    pub id: String,
    pub position: Point,
    pub capacity_bytes: u64,
    pub coverage_radius_m: f64,
    pub bandwidth_hz: f64,
    pub power_w: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum MobilityPattern {
    #[default]
    Static,
    Pedestrian,
    Bike,
    Vehicle,
}

impl fmt::Display for MobilityPattern {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            MobilityPattern::Static => "static",
            MobilityPattern::Pedestrian => "pedestrian",
            MobilityPattern::Bike => "bike",
            MobilityPattern::Vehicle => "vehicle",
        })
    }
}

impl FromStr for MobilityPattern {
    type Err = NetworkError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "static" => Ok(MobilityPattern::Static),
            "pedestrian" => Ok(MobilityPattern::Pedestrian),
            "bike" => Ok(MobilityPattern::Bike),
            "vehicle" => Ok(MobilityPattern::Vehicle),
            other => Err(NetworkError::UnknownPattern(other.to_owned())),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UserNode {
    pub id: String,
    pub position: Point,
    pub speed_mps: f64,
    /// Heading in radians, measured from the +x axis.
    pub heading_rad: f64,
    pub pattern: MobilityPattern,
}

impl UserNode {
    pub fn velocity(&self) -> Point {
        Point {
            x: self.speed_mps * self.heading_rad.cos(),
            y: self.speed_mps * self.heading_rad.sin(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ChannelParams {
    /// Antenna-related factor.
    pub gamma0: f64,
    /// Path-loss exponent.
    pub alpha0: f64,
    /// Noise power spectral density, W/Hz.
    pub noise_psd_w_per_hz: f64,
    /// Probability that a user is active.
    pub active_prob: f64,
    /// Server-to-server rate, bit/s.
    pub backhaul_rate_bps: f64,
}

impl Default for ChannelParams {
    /// γ0 = 1, α0 = 4, n0 = −174 dBm/Hz, p_A = 0.5, 10 Gbit/s backhaul.
    fn default() -> Self {
        Self {
            gamma0: 1.0,
            alpha0: 4.0,
            noise_psd_w_per_hz: dbm_to_watts(-174.0),
            active_prob: 0.5,
            backhaul_rate_bps: 10e9,
        }
    }
}

impl ChannelParams {
    pub fn validate(&self) -> Result<(), NetworkError> {
        let bad = |m: &str| Err(NetworkError::InvalidChannel(m.to_owned()));
        if !(self.alpha0 >= 2.0) {
            return bad("alpha0 must be >= 2");
        }
        if !(self.active_prob > 0.0 && self.active_prob <= 1.0) {
            return bad("active_prob must lie in (0, 1]");
        }
        if !(self.backhaul_rate_bps > 0.0) {
            return bad("backhaul_rate_bps must be positive");
        }
        if !(self.gamma0 > 0.0) || !(self.noise_psd_w_per_hz > 0.0) {
            return bad("gamma0 and noise_psd_w_per_hz must be positive");
        }
        Ok(())
    }
}

/// Snapshot of servers and users. Immutable; mobility produces a new value.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Topology {
    pub area: Area,
    pub channel: ChannelParams,
    pub servers: Vec<EdgeServer>,
    pub users: Vec<UserNode>,
}

fn default_radius() -> f64 {
    275.0
}
fn default_bandwidth() -> f64 {
    400e6
}
fn default_power_dbm() -> f64 {
    43.0
}
fn default_side() -> f64 {
    1000.0
}

/// Parameters for [`generate_topology`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TopologyConfig {
    pub servers: usize,
    pub users: usize,
    pub capacity_bytes: u64,
    #[serde(default = "default_side")]
    pub area_side_m: f64,
    #[serde(default = "default_radius")]
    pub coverage_radius_m: f64,
    #[serde(default = "default_bandwidth")]
    pub bandwidth_hz: f64,
    #[serde(default = "default_power_dbm")]
    pub power_dbm: f64,
    #[serde(default)]
    pub channel: ChannelParams,
    #[serde(default)]
    pub mobility: MobilityPattern,
}

impl TopologyConfig {
    /// 1 km² area, 275 m radius, 400 MHz, 43 dBm.
    pub fn new(servers: usize, users: usize, capacity_bytes: u64) -> Self {
        Self {
            servers,
            users,
            capacity_bytes,
            area_side_m: default_side(),
            coverage_radius_m: default_radius(),
            bandwidth_hz: default_bandwidth(),
            power_dbm: default_power_dbm(),
            channel: ChannelParams::default(),
            mobility: MobilityPattern::Static,
        }
    }
}

/// Servers and users uniformly distributed over a square.
///
/// Server `m` and user `k` each draw from their own stream, so growing `M`
/// or `K` keeps the existing nodes in place.
pub fn generate_topology(cfg: &TopologyConfig, seed: u64) -> Result<Topology, NetworkError> {
    if !(cfg.area_side_m > 0.0) {
        return Err(NetworkError::ZeroArea);
    }
    cfg.channel.validate()?;
    let area = Area::square(cfg.area_side_m);
    let servers = (0..cfg.servers)
        .map(|m| {
            let mut rng = rng_for(seed, &[stream::SERVER, m as u64]);
            EdgeServer {
                id: format!("s{m}"),
                position: Point {
                    x: rng.random_range(0.0..=area.width_m),
                    y: rng.random_range(0.0..=area.height_m),
                },
                capacity_bytes: cfg.capacity_bytes,
                coverage_radius_m: cfg.coverage_radius_m,
                bandwidth_hz: cfg.bandwidth_hz,
                power_w: dbm_to_watts(cfg.power_dbm),
            }
        })
        .collect();
    let motion = MobilityModel::default().params(cfg.mobility);
    let users = (0..cfg.users)
        .map(|k| {
            let mut rng = rng_for(seed, &[stream::USER, k as u64]);
            let position = Point {
                x: rng.random_range(0.0..=area.width_m),
                y: rng.random_range(0.0..=area.height_m),
            };
            let speed_mps = rng.random_range(motion.speed_mps.0..=motion.speed_mps.1);
            let heading_rad = rng.random_range(0.0..=PI);
            UserNode {
                id: format!("u{k}"),
                position,
                speed_mps,
                heading_rad,
                pattern: cfg.mobility,
            }
        })
        .collect();
    let topo = Topology {
        area,
        channel: cfg.channel,
        servers,
        users,
    };
    topo.validate()?;
    Ok(topo)
}

impl Topology {
    pub fn num_servers(&self) -> usize {
        self.servers.len()
    }

    pub fn num_users(&self) -> usize {
        self.users.len()
    }

    pub fn validate(&self) -> Result<(), NetworkError> {
        if !(self.area.width_m > 0.0 && self.area.height_m > 0.0) {
            return Err(NetworkError::ZeroArea);
        }
        self.channel.validate()?;
        for s in &self.servers {
            let reason = if !(s.coverage_radius_m > 0.0) {
                Some("coverage radius must be positive")
            } else if !(s.bandwidth_hz > 0.0) || !(s.power_w > 0.0) {
                Some("bandwidth and power must be positive")
            } else {
                None
            };
            if let Some(reason) = reason {
                return Err(NetworkError::InvalidServer {
                    id: s.id.clone(),
                    reason: reason.into(),
                });
            }
        }
        for u in &self.users {
            if !self.area.contains(u.position) {
                return Err(NetworkError::UserOutsideArea(u.id.clone()));
            }
        }
        Ok(())
    }

    pub fn distance(&self, server: usize, user: usize) -> f64 {
        self.servers[server].position.distance(self.users[user].position)
    }

    pub fn covers(&self, server: usize, user: usize) -> bool {
        self.distance(server, user) <= self.servers[server].coverage_radius_m
    }

    /// `M_k`: servers covering user `k`, ascending.
    pub fn associated_servers(&self, user: usize) -> Vec<usize> {
        (0..self.servers.len()).filter(|&m| self.covers(m, user)).collect()
    }

    /// `K_m`: users covered by server `m`, ascending.
    pub fn covered_users(&self, server: usize) -> Vec<usize> {
        (0..self.users.len()).filter(|&k| self.covers(server, k)).collect()
    }

    /// The associated server closest to `user`, ties to the lower index.
    pub fn nearest_associated(&self, user: usize) -> Option<usize> {
        self.associated_servers(user)
            .into_iter()
            .min_by(|&a, &b| self.distance(a, user).total_cmp(&self.distance(b, user)))
    }

    fn rate_with_gain(&self, server: usize, user: usize, covered: usize, fading: f64) -> f64 {
        let s = &self.servers[server];
        let share = self.channel.active_prob * covered as f64;
        let bw = s.bandwidth_hz / share;
        let power = s.power_w / share;
        let d = self.distance(server, user).max(MIN_LINK_DISTANCE_M);
        let gain = self.channel.gamma0 * d.powf(-self.channel.alpha0) * fading;
        bw * (1.0 + power * gain / (self.channel.noise_psd_w_per_hz * bw)).log2()
    }

    /// Expected downlink rate `C̄_{m,k}` in bit/s, with bandwidth and power
    /// split evenly over the expected active users of `m`.
    pub fn expected_rate(&self, server: usize, user: usize) -> Result<f64, NetworkError> {
        self.sampled_rate(server, user, 1.0)
    }

    /// Downlink rate under an instantaneous Rayleigh power gain `fading`
    /// (a unit-mean exponential draw).
    pub fn sampled_rate(&self, server: usize, user: usize, fading: f64) -> Result<f64, NetworkError> {
        if !(fading >= 0.0) {
            return Err(NetworkError::NegativeFading(fading));
        }
        if !self.covers(server, user) {
            return Err(NetworkError::NotAssociated { server, user });
        }
        let covered = self.covered_users(server).len();
        Ok(self.rate_with_gain(server, user, covered, fading))
    }

    pub fn to_json(&self) -> String {
        #[derive(Serialize)]
        struct Doc<'a> {
            format: &'a str,
            version: u32,
            #[serde(flatten)]
            topology: &'a Topology,
        }
        let mut s = serde_json::to_string_pretty(&Doc {
            format: TOPOLOGY_FORMAT,
            version: TOPOLOGY_FORMAT_VERSION,
            topology: self,
        })
        .expect("topology serializes");
        s.push('\n');
        s
    }

    pub fn from_json(text: &str) -> Result<Self, NetworkError> {
        #[derive(Deserialize)]
        struct Doc {
            format: String,
            version: u32,
            #[serde(flatten)]
            topology: Topology,
        }
        let doc: Doc = serde_json::from_str(text).map_err(|e| NetworkError::Format(e.to_string()))?;
        if doc.format != TOPOLOGY_FORMAT || doc.version != TOPOLOGY_FORMAT_VERSION {
            return Err(NetworkError::Format(format!(
                "expected {TOPOLOGY_FORMAT} v{TOPOLOGY_FORMAT_VERSION}, found {} v{}",
                doc.format, doc.version
            )));
        }
        doc.topology.validate()?;
        Ok(doc.topology)
    }
}

/// Per-link downlink rates for every associated (server, user) pair.
#[derive(Debug, Clone)]
pub struct RateTable {
    servers: usize,
    users: usize,
    /// Indexed `m * K + k`; `None` when `m` does not cover `k`.
    rates: Vec<Option<f64>>,
    associated: Vec<Vec<usize>>,
    backhaul_bps: f64,
}

impl RateTable {
    /// Rates under mean channel gains.
    pub fn expected(topo: &Topology) -> Self {
        Self::with_fading(topo, |_, _| 1.0)
    }

    /// Rates with a per-link power gain multiplier `fading(m, k)`.
    pub fn with_fading(topo: &Topology, mut fading: impl FnMut(usize, usize) -> f64) -> Self {
        let (servers, users) = (topo.num_servers(), topo.num_users());
        let mut rates = vec![None; servers * users];
        let mut associated = vec![Vec::new(); users];
        for m in 0..servers {
            let covered = topo.covered_users(m);
            for &k in &covered {
                let h = fading(m, k);
                rates[m * users + k] = Some(topo.rate_with_gain(m, k, covered.len(), h));
                associated[k].push(m);
            }
        }
        Self {
            servers,
            users,
            rates,
            associated,
            backhaul_bps: topo.channel.backhaul_rate_bps,
        }
    }

    pub fn servers(&self) -> usize {
        self.servers
    }

    pub fn users(&self) -> usize {
        self.users
    }

    pub fn rate(&self, server: usize, user: usize) -> Option<f64> {
        self.rates[server * self.users + user]
    }

    pub fn associated(&self, user: usize) -> &[usize] {
        &self.associated[user]
    }

    /// Fastest access transfer time for `bits` over any associated server.
    pub fn best_access_time(&self, user: usize, bits: f64) -> f64 {
        self.associated[user]
            .iter()
            .map(|&m| transfer_time(bits, self.rate(m, user).unwrap()))
            .fold(f64::INFINITY, f64::min)
    }

    /// E2E latency `T_{m,k,i}` for a model of `bits` with inference time
    /// `inference_s`. Direct download when `m` covers `k`, otherwise relay
    /// through the best associated server; `+inf` for an uncovered user.
    pub fn latency(&self, server: usize, user: usize, bits: f64, inference_s: f64) -> f64 {
        match self.rate(server, user) {
            Some(rate) => transfer_time(bits, rate) + inference_s,
            None => {
                if self.associated[user].is_empty() {
                    return f64::INFINITY;
                }
                transfer_time(bits, self.backhaul_bps) + self.best_access_time(user, bits) + inference_s
            }
        }
    }
}

fn transfer_time(bits: f64, rate: f64) -> f64 {
    if bits == 0.0 {
        0.0
    } else {
        bits / rate
    }
}

/// E2E latency of user `k` fetching model `i` from server `m` under
/// expected rates.
pub fn e2e_latency(
    topo: &Topology,
    lib: &ModelLibrary,
    server: usize,
    user: usize,
    model: usize,
    inference_s: f64,
) -> f64 {
    RateTable::expected(topo).latency(server, user, bytes_to_bits(lib.model_size(model)), inference_s)
}

/// Speed, acceleration and angular-velocity ranges of one pattern.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PatternParams {
    pub speed_mps: (f64, f64),
    pub accel_mps2: (f64, f64),
    pub angular_rad_s: (f64, f64),
}

impl PatternParams {
    pub const STILL: PatternParams = PatternParams {
        speed_mps: (0.0, 0.0),
        accel_mps2: (0.0, 0.0),
        angular_rad_s: (0.0, 0.0),
    };
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MobilityModel {
    pub pedestrian: PatternParams,
    pub bike: PatternParams,
    pub vehicle: PatternParams,
}

impl Default for MobilityModel {
    fn default() -> Self {
        Self {
            pedestrian: PatternParams {
                speed_mps: (0.5, 1.8),
                accel_mps2: (-0.3, 0.3),
                angular_rad_s: (-PI / 4.0, PI / 4.0),
            },
            bike: PatternParams {
                speed_mps: (2.0, 8.0),
                accel_mps2: (-1.0, 1.0),
                angular_rad_s: (-PI / 3.0, PI / 3.0),
            },
            vehicle: PatternParams {
                speed_mps: (5.5, 20.0),
                accel_mps2: (-3.0, 3.0),
                angular_rad_s: (-PI / 2.0, PI / 2.0),
            },
        }
    }
}

impl MobilityModel {
    pub fn params(&self, pattern: MobilityPattern) -> PatternParams {
        match pattern {
            MobilityPattern::Static => PatternParams::STILL,
            MobilityPattern::Pedestrian => self.pedestrian,
            MobilityPattern::Bike => self.bike,
            MobilityPattern::Vehicle => self.vehicle,
        }
    }
}

fn reflect(mut pos: f64, mut heading: f64, limit: f64, mirror: impl Fn(f64) -> f64) -> (f64, f64) {
    while !(0.0..=limit).contains(&pos) {
        pos = if pos < 0.0 { -pos } else { 2.0 * limit - pos };
        heading = mirror(heading);
    }
    (pos, heading)
}

/// Advances every user by one slot of `dt` seconds: draw an acceleration and
/// an angular velocity, update speed (clamped to the pattern range, never
/// negative) and heading, then move, reflecting specularly off the area
/// boundary.
pub fn mobility_step(
    topo: &Topology,
    model: &MobilityModel,
    dt: f64,
    seed: u64,
) -> Result<Topology, NetworkError> {
    if !(dt > 0.0) {
        return Err(NetworkError::InvalidTimeStep(dt));
    }
    let mut next = topo.clone();
    for (k, user) in next.users.iter_mut().enumerate() {
        if user.pattern == MobilityPattern::Static {
            continue;
        }
        let p = model.params(user.pattern);
        let mut rng = rng_for(seed, &[stream::MOBILITY, k as u64]);
        let accel = rng.random_range(p.accel_mps2.0..=p.accel_mps2.1);
        let turn = rng.random_range(p.angular_rad_s.0..=p.angular_rad_s.1);
        user.speed_mps = (user.speed_mps + accel * dt).clamp(p.speed_mps.0.max(0.0), p.speed_mps.1);
        user.heading_rad += turn * dt;
        let (x, h) = reflect(
            user.position.x + user.speed_mps * dt * user.heading_rad.cos(),
            user.heading_rad,
            topo.area.width_m,
            |h| PI - h,
        );
        let (y, h) = reflect(
            user.position.y + user.speed_mps * dt * h.sin(),
            h,
            topo.area.height_m,
            |h| -h,
        );
        user.position = Point { x, y };
        user.heading_rad = h.rem_euclid(2.0 * PI);
    }
    Ok(next)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand_distr::{Distribution, Exp1};

    fn server_at(x: f64, y: f64) -> EdgeServer {
        EdgeServer {
            id: "s".into(),
            position: Point { x, y },
            capacity_bytes: 0,
            coverage_radius_m: 275.0,
            bandwidth_hz: 400e6,
            power_w: dbm_to_watts(43.0),
        }
    }

    fn user_at(id: usize, x: f64, y: f64) -> UserNode {
        UserNode {
            id: format!("u{id}"),
            position: Point { x, y },
            speed_mps: 0.0,
            heading_rad: 0.0,
            pattern: MobilityPattern::Static,
        }
    }

    fn topo(servers: Vec<EdgeServer>, users: Vec<UserNode>) -> Topology {
        Topology {
            area: Area::square(1000.0),
            channel: ChannelParams::default(),
            servers,
            users,
        }
    }

    #[test]
    fn generated_nodes_lie_in_the_square() {
        let t = generate_topology(&TopologyConfig::new(10, 30, 1), 4).unwrap();
        assert_eq!(t.servers.len(), 10);
        assert_eq!(t.users.len(), 30);
        assert!(t.users.iter().all(|u| t.area.contains(u.position)));
        assert!(t.servers.iter().all(|s| t.area.contains(s.position)));
        assert_eq!(t, generate_topology(&TopologyConfig::new(10, 30, 1), 4).unwrap());
        let empty = generate_topology(&TopologyConfig::new(3, 0, 1), 4).unwrap();
        assert!(empty.users.is_empty());
        let mut cfg = TopologyConfig::new(1, 1, 1);
        cfg.area_side_m = 0.0;
        assert_eq!(generate_topology(&cfg, 0), Err(NetworkError::ZeroArea));
    }

    #[test]
    fn growing_counts_keeps_existing_nodes() {
        let a = generate_topology(&TopologyConfig::new(4, 10, 1), 8).unwrap();
        let b = generate_topology(&TopologyConfig::new(6, 20, 1), 8).unwrap();
        assert_eq!(a.servers[..], b.servers[..4]);
        assert_eq!(a.users[..], b.users[..10]);
    }

    #[test]
    fn unit_rate_case() {
        // B̄ = 1 Hz and SNR = 1 → 1 bit/s.
        let mut t = topo(vec![server_at(0.0, 0.0)], vec![user_at(0, 10.0, 0.0)]);
        t.channel.active_prob = 1.0;
        t.channel.alpha0 = 2.0;
        t.servers[0].bandwidth_hz = 1.0;
        // SNR = P γ0 d^-2 / (n0 B) = 1 with d = 10.
        t.servers[0].power_w = 100.0 * t.channel.noise_psd_w_per_hz;
        let r = t.expected_rate(0, 0).unwrap();
        assert!((r - 1.0).abs() < 1e-12, "{r}");
    }

    #[test]
    fn rate_regression_value() {
        // B = 400 MHz, P = 43 dBm, p_A = 0.5, |K_m| = 4, d = 100 m.
        let users = vec![
            user_at(0, 200.0, 100.0),
            user_at(1, 100.0, 200.0),
            user_at(2, 10.0, 100.0),
            user_at(3, 100.0, 10.0),
        ];
        let t = topo(vec![server_at(100.0, 100.0)], users);
        assert_eq!(t.covered_users(0).len(), 4);
        // Independent evaluation, same inputs written out by hand:
        // B̄ = 4e8 / 2 = 2e8 Hz, P̄ = 19.9526 W / 2, n0 = 10^-20.4 W/Hz.
        let bw = 2e8_f64;
        let p = 10f64.powf(1.3) / 2.0;
        let n0 = 10f64.powf(-20.4);
        let snr = p * 1e-8 / (n0 * bw);
        let expected = bw * (1.0 + snr).log2();
        let r = t.expected_rate(0, 0).unwrap();
        assert!((r - expected).abs() / expected < 1e-12);
        // Frozen constant (≈ 3.39 Gbit/s).
        assert!((r - 3_387_000_331.006).abs() < 1e-2, "{r}");
    }

    #[test]
    fn rate_monotonicity_and_errors() {
        let t = topo(
            vec![server_at(0.0, 0.0)],
            vec![user_at(0, 100.0, 0.0), user_at(1, 200.0, 0.0), user_at(2, 900.0, 0.0)],
        );
        assert!(t.expected_rate(0, 1).unwrap() < t.expected_rate(0, 0).unwrap());
        assert_eq!(t.expected_rate(0, 2), Err(NetworkError::NotAssociated { server: 0, user: 2 }));
        assert_eq!(t.sampled_rate(0, 0, -0.5), Err(NetworkError::NegativeFading(-0.5)));
        assert_eq!(t.sampled_rate(0, 0, 0.0).unwrap(), 0.0);
        assert_eq!(t.sampled_rate(0, 0, 1.0), t.expected_rate(0, 0));
        // More covered users → less bandwidth each.
        let crowded = topo(
            vec![server_at(0.0, 0.0)],
            vec![user_at(0, 100.0, 0.0), user_at(1, 200.0, 0.0), user_at(2, 150.0, 0.0)],
        );
        assert!(crowded.expected_rate(0, 0).unwrap() < t.expected_rate(0, 0).unwrap());
    }

    #[test]
    fn fading_gain_has_unit_mean() {
        let t = topo(vec![server_at(0.0, 0.0)], vec![user_at(0, 150.0, 0.0)]);
        let mut rng = rng_for(99, &[]);
        let n = 100_000;
        let mean: f64 = (0..n).map(|_| Exp1.sample(&mut rng)).map(|h: f64| h).sum::<f64>() / n as f64;
        assert!((mean - 1.0).abs() < 0.02, "{mean}");
        // The SNR argument scales linearly in h.
        let snr = |h: f64| 2f64.powf(t.sampled_rate(0, 0, h).unwrap() / (400e6 / 0.5)) - 1.0;
        assert!((snr(2.0) / snr(1.0) - 2.0).abs() < 1e-9);
    }

    #[test]
    fn latency_cases() {
        let t = topo(
            vec![server_at(0.0, 0.0), server_at(600.0, 0.0)],
            vec![user_at(0, 100.0, 0.0), user_at(1, 0.0, 900.0)],
        );
        let rates = RateTable::expected(&t);
        let c = rates.rate(0, 0).unwrap();
        let bits = 1e9;
        assert!((rates.latency(0, 0, bits, 0.001) - (bits / c + 0.001)).abs() < 1e-12);
        assert_eq!(rates.latency(0, 0, 0.0, 0.25), 0.25);
        // Relay: server 1 does not cover user 0; only candidate is server 0.
        let relay = rates.latency(1, 0, bits, 0.001);
        assert!((relay - (bits / 10e9 + bits / c + 0.001)).abs() < 1e-12);
        assert!(rates.latency(0, 0, bits, 0.001) <= relay);
        // Uncovered user.
        assert!(rates.latency(0, 1, bits, 0.001).is_infinite());
    }

    #[test]
    fn straight_line_motion() {
        let mut t = topo(vec![], vec![user_at(0, 100.0, 100.0)]);
        t.users[0].pattern = MobilityPattern::Pedestrian;
        t.users[0].speed_mps = 1.0;
        let mut model = MobilityModel::default();
        model.pedestrian = PatternParams {
            speed_mps: (0.0, 2.0),
            accel_mps2: (0.0, 0.0),
            angular_rad_s: (0.0, 0.0),
        };
        let next = mobility_step(&t, &model, 1.0, 0).unwrap();
        assert!((next.users[0].position.x - 101.0).abs() < 1e-12);
        assert!((next.users[0].position.y - 100.0).abs() < 1e-12);
        assert!(mobility_step(&t, &model, 0.0, 0).is_err());
    }

    #[test]
    fn boundary_reflection() {
        let mut t = topo(vec![], vec![user_at(0, 999.0, 500.0)]);
        t.users[0].pattern = MobilityPattern::Vehicle;
        t.users[0].speed_mps = 3.0;
        let mut model = MobilityModel::default();
        model.vehicle = PatternParams {
            speed_mps: (0.0, 10.0),
            accel_mps2: (0.0, 0.0),
            angular_rad_s: (0.0, 0.0),
        };
        let next = mobility_step(&t, &model, 1.0, 0).unwrap();
        let u = &next.users[0];
        assert!((u.position.x - 998.0).abs() < 1e-9);
        assert!((u.heading_rad - PI).abs() < 1e-12);
        assert!(next.area.contains(u.position));
    }

    #[test]
    fn vehicles_stay_inside_for_two_hours() {
        let mut cfg = TopologyConfig::new(2, 25, 1);
        cfg.mobility = MobilityPattern::Vehicle;
        let mut t = generate_topology(&cfg, 1).unwrap();
        let model = MobilityModel::default();
        let steps = (2.0 * 3600.0 / 5.0) as usize;
        assert_eq!(steps, 1440);
        for step in 0..steps {
            t = mobility_step(&t, &model, 5.0, step as u64).unwrap();
            assert_eq!(t.users.len(), 25);
            for u in &t.users {
                assert!(t.area.contains(u.position));
                assert!((5.5..=20.0).contains(&u.speed_mps));
            }
        }
    }

    #[test]
    fn pattern_parsing() {
        assert_eq!("bike".parse::<MobilityPattern>().unwrap(), MobilityPattern::Bike);
        assert!(matches!("hover".parse::<MobilityPattern>(), Err(NetworkError::UnknownPattern(_))));
    }

    #[test]
    fn topology_file_round_trip() {
        let t = generate_topology(&TopologyConfig::new(10, 30, 123), 6).unwrap();
        let text = t.to_json();
        let back = Topology::from_json(&text).unwrap();
        assert_eq!(back, t);
        assert_eq!(back.to_json(), text);
    }
}
