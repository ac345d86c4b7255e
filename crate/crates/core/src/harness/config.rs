//! Experiment configuration (TOML).

use serde::{Deserialize, Serialize};

use crate::library::{generate_library, AdapterBackbone, AdapterConfig, LibraryConfig, ModelLibrary};
use crate::network::{ChannelParams, MobilityPattern, TopologyConfig};
use crate::objective::{Epsilon, PROB_SCALE};
use crate::seed::{derive_seed, stream};
use crate::solvers::{Admission, Algorithm};

use super::HarnessError;

pub const GB: f64 = 1e9;

/// Built-in library generators.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum LibraryPreset {
    ResnetChain,
    ResnetTwoStage,
    Gpt2Adapter,
}

/// Either a preset (optionally with a different LoRA/fine-tune count per
/// root) or a full generator config. With neither, `gpt2-adapter`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LibrarySettings {
    #[serde(default)]
    pub preset: Option<LibraryPreset>,
    /// Overrides the per-root model count of chain and adapter presets.
    #[serde(default)]
    pub models_per_root: Option<usize>,
    #[serde(default)]
    pub custom: Option<LibraryConfig>,
}

impl Default for LibrarySettings {
    fn default() -> Self {
        Self {
            preset: Some(LibraryPreset::Gpt2Adapter),
            models_per_root: None,
            custom: None,
        }
    }
}

impl LibrarySettings {
    pub fn resolve(&self) -> Result<LibraryConfig, HarnessError> {
        match (&self.preset, &self.custom) {
            (Some(_), Some(_)) => Err(HarnessError::Config("set either library.preset or library.custom, not both".into())),
            (None, Some(c)) => {
                if self.models_per_root.is_some() {
                    return Err(HarnessError::Config("models_per_root only applies to presets".into()));
                }
                Ok(c.clone())
            }
            (preset, None) => {
                let mut cfg = match preset.unwrap_or(LibraryPreset::Gpt2Adapter) {
                    LibraryPreset::ResnetChain => LibraryConfig::resnet_chain(),
                    LibraryPreset::ResnetTwoStage => LibraryConfig::resnet_two_stage(),
                    LibraryPreset::Gpt2Adapter => LibraryConfig::gpt2_adapter(),
                };
                if let Some(n) = self.models_per_root {
                    match &mut cfg {
                        LibraryConfig::Chain(c) => c.structures.iter_mut().for_each(|s| s.models = n),
                        LibraryConfig::Adapter(AdapterConfig { backbones }) => {
                            backbones.iter_mut().for_each(|b: &mut AdapterBackbone| b.models = n)
                        }
                        LibraryConfig::TwoStage(_) => {
                            return Err(HarnessError::Config(
                                "models_per_root does not apply to the two-stage preset".into(),
                            ))
                        }
                    }
                }
                Ok(cfg)
            }
        }
    }
}

fn default_side() -> f64 {
    1000.0
}
fn default_radius() -> f64 {
    275.0
}
fn default_bandwidth() -> f64 {
    400e6
}
fn default_power() -> f64 {
    43.0
}

/// Topology parameters other than the swept counts and capacity.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NetworkSettings {
    #[serde(default = "default_side")]
    pub area_side_m: f64,
    #[serde(default = "default_radius")]
    pub coverage_radius_m: f64,
    #[serde(default = "default_bandwidth")]
    pub bandwidth_hz: f64,
    #[serde(default = "default_power")]
    pub power_dbm: f64,
    #[serde(default)]
    pub channel: ChannelParams,
}

impl Default for NetworkSettings {
    fn default() -> Self {
        Self {
            area_side_m: default_side(),
            coverage_radius_m: default_radius(),
            bandwidth_hz: default_bandwidth(),
            power_dbm: default_power(),
            channel: ChannelParams::default(),
        }
    }
}

fn default_zipf() -> f64 {
    1.0
}
fn default_activity() -> f64 {
    0.5
}
fn default_quantum() -> u64 {
    100
}
fn default_deadline() -> [f64; 2] {
    [0.5, 1.0]
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct WorkloadConfig {
    /// Zipf skew of per-user popularity.
    #[serde(default = "default_zipf")]
    pub zipf_s: f64,
    /// Total request probability per user.
    #[serde(default = "default_activity")]
    pub active_prob: f64,
    /// Probabilities are rounded to multiples of this many micro-units.
    #[serde(default = "default_quantum")]
    pub prob_quantum: u64,
    /// Latency requirement range, seconds.
    #[serde(default = "default_deadline")]
    pub latency_req_s: [f64; 2],
    /// Inference time range in milliseconds; defaults to [40, 200] for
    /// adapter libraries and [1, 5] otherwise.
    #[serde(default)]
    pub inference_ms: Option<[f64; 2]>,
}

impl Default for WorkloadConfig {
    fn default() -> Self {
        Self {
            zipf_s: default_zipf(),
            active_prob: default_activity(),
            prob_quantum: default_quantum(),
            latency_req_s: default_deadline(),
            inference_ms: None,
        }
    }
}

impl WorkloadConfig {
    pub fn validate(&self) -> Result<(), HarnessError> {
        let bad = |m: &str| Err(HarnessError::Config(format!("workload: {m}")));
        if !(self.zipf_s > 0.0 && self.zipf_s.is_finite()) {
            return bad("zipf_s must be positive");
        }
        if !(self.active_prob > 0.0 && self.active_prob <= 1.0) {
            return bad("active_prob must lie in (0, 1]");
        }
        if self.prob_quantum == 0 || PROB_SCALE % self.prob_quantum != 0 {
            return bad("prob_quantum must be a positive divisor of 1000000");
        }
        let [lo, hi] = self.latency_req_s;
        if !(lo > 0.0 && lo <= hi) {
            return bad("latency_req_s must be an increasing positive range");
        }
        if let Some([lo, hi]) = self.inference_ms {
            if !(lo > 0.0 && lo <= hi && hi.is_finite()) {
                return bad("inference_ms must be an increasing positive range");
            }
        }
        Ok(())
    }

    pub fn inference_range_s(&self, lib: &ModelLibrary) -> [f64; 2] {
        let [lo, hi] = self.inference_ms.unwrap_or(if lib.provenance().generator == "adapter" {
            [40.0, 200.0]
        } else {
            [1.0, 5.0]
        });
        [lo / 1e3, hi / 1e3]
    }
}

/// One `(Q, M, K)` point.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AxisPoint {
    pub capacity_gb: f64,
    pub servers: usize,
    pub users: usize,
}

impl Default for AxisPoint {
    fn default() -> Self {
        Self {
            capacity_gb: 1.0,
            servers: 6,
            users: 20,
        }
    }
}

impl AxisPoint {
    pub fn capacity_bytes(&self) -> u64 {
        (self.capacity_gb * GB).round() as u64
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepSettings {
    #[serde(default)]
    pub base: AxisPoint,
    #[serde(default)]
    pub capacity_gb: Vec<f64>,
    #[serde(default)]
    pub servers: Vec<usize>,
    #[serde(default)]
    pub users: Vec<usize>,
}

impl Default for SweepSettings {
    fn default() -> Self {
        Self {
            base: AxisPoint::default(),
            capacity_gb: Vec::new(),
            servers: Vec::new(),
            users: Vec::new(),
        }
    }
}

impl SweepSettings {
    /// The base point plus each axis varied alone, deduplicated and sorted
    /// by `(Q, M, K)`.
    pub fn points(&self) -> Vec<AxisPoint> {
        let b = self.base;
        let mut pts = vec![b];
        pts.extend(self.capacity_gb.iter().map(|&q| AxisPoint { capacity_gb: q, ..b }));
        pts.extend(self.servers.iter().map(|&m| AxisPoint { servers: m, ..b }));
        pts.extend(self.users.iter().map(|&k| AxisPoint { users: k, ..b }));
        let key = |p: &AxisPoint| (p.capacity_bytes(), p.servers, p.users);
        pts.sort_by_key(key);
        pts.dedup_by_key(|p| key(p));
        pts
    }
}

fn default_horizon() -> f64 {
    7200.0
}
fn default_mobility_slot() -> f64 {
    5.0
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MobilitySettings {
    #[serde(default = "pedestrian")]
    pub pattern: MobilityPattern,
    #[serde(default = "default_horizon")]
    pub horizon_s: f64,
    #[serde(default = "default_mobility_slot")]
    pub slot_s: f64,
}

fn pedestrian() -> MobilityPattern {
    MobilityPattern::Pedestrian
}

impl Default for MobilitySettings {
    fn default() -> Self {
        Self {
            pattern: MobilityPattern::Pedestrian,
            horizon_s: default_horizon(),
            slot_s: default_mobility_slot(),
        }
    }
}

impl MobilitySettings {
    pub fn slots(&self) -> usize {
        (self.horizon_s / self.slot_s).round() as usize
    }
}

fn default_online_slot() -> f64 {
    10.0
}
fn default_online_slots() -> usize {
    540
}
fn default_warmup() -> usize {
    180
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OnlineSettings {
    #[serde(default = "default_online_slot")]
    pub slot_s: f64,
    /// Total slots, warm-up included.
    #[serde(default = "default_online_slots")]
    pub slots: usize,
    /// Slots excluded from the steady-state mean.
    #[serde(default = "default_warmup")]
    pub warmup_slots: usize,
    #[serde(default)]
    pub admit: Admission,
}

impl Default for OnlineSettings {
    fn default() -> Self {
        Self {
            slot_s: default_online_slot(),
            slots: default_online_slots(),
            warmup_slots: default_warmup(),
            admit: Admission::Nearest,
        }
    }
}

fn default_cv() -> Vec<f64> {
    vec![0.0, 0.1, 0.2, 0.3, 0.4, 0.5]
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PerturbationSettings {
    #[serde(default = "default_cv")]
    pub cv: Vec<f64>,
}

impl Default for PerturbationSettings {
    fn default() -> Self {
        Self { cv: default_cv() }
    }
}

fn default_replicates() -> usize {
    20
}
fn default_draws() -> usize {
    100
}
fn default_algorithms() -> Vec<Algorithm> {
    vec![Algorithm::Spec, Algorithm::Gen, Algorithm::Independent]
}
fn default_epsilon() -> f64 {
    0.1
}
fn default_jobs() -> usize {
    1
}

/// Everything an experiment needs. Load with [`ExperimentConfig::from_toml`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub seed: u64,
    #[serde(default = "default_replicates")]
    pub replicates: usize,
    #[serde(default = "default_draws")]
    pub fading_draws: usize,
    #[serde(default = "default_algorithms")]
    pub algorithms: Vec<Algorithm>,
    #[serde(default = "default_epsilon")]
    pub epsilon: f64,
    /// Record solver wall time; off by default so outputs are reproducible
    /// byte for byte.
    #[serde(default)]
    pub record_runtime: bool,
    #[serde(default = "default_jobs")]
    pub jobs: usize,
    #[serde(default)]
    pub library: LibrarySettings,
    #[serde(default)]
    pub network: NetworkSettings,
    #[serde(default)]
    pub workload: WorkloadConfig,
    #[serde(default)]
    pub sweep: SweepSettings,
    #[serde(default)]
    pub mobility: MobilitySettings,
    #[serde(default)]
    pub online: OnlineSettings,
    #[serde(default)]
    pub perturbation: PerturbationSettings,
}

impl ExperimentConfig {
    /// A config with every default and the given master seed.
    pub fn with_seed(seed: u64) -> Self {
        toml::from_str(&format!("seed = {seed}")).expect("defaults parse")
    }

    pub fn from_toml(text: &str) -> Result<Self, HarnessError> {
        let cfg: Self = toml::from_str(text).map_err(|e| HarnessError::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    pub fn validate(&self) -> Result<(), HarnessError> {
        let bad = |m: String| Err(HarnessError::Config(m));
        if self.replicates == 0 {
            return bad("replicates must be at least 1".into());
        }
        if self.fading_draws == 0 {
            return bad("fading_draws must be at least 1".into());
        }
        if self.algorithms.is_empty() {
            return bad("algorithms must not be empty".into());
        }
        if let Some(a) = self.algorithms.iter().find(|a| matches!(a, Algorithm::Lru | Algorithm::Lfu)) {
            return bad(format!("`{a}` is an online policy; static experiments take spec, gen, independent or oracle"));
        }
        Epsilon::new(self.epsilon).map_err(|e| HarnessError::Config(e.to_string()))?;
        self.library.resolve()?;
        self.workload.validate()?;
        let s = &self.sweep;
        for p in s.points() {
            if !(p.capacity_gb >= 0.0 && p.capacity_gb.is_finite()) {
                return bad(format!("capacity {} GB is not a non-negative number", p.capacity_gb));
            }
            if p.servers == 0 || p.users == 0 {
                return bad("server and user counts must be positive".into());
            }
        }
        if !(self.mobility.slot_s > 0.0 && self.mobility.horizon_s >= 0.0) {
            return bad("mobility slot_s must be positive and horizon_s non-negative".into());
        }
        if self.online.slots == 0 || self.online.warmup_slots >= self.online.slots {
            return bad("online needs warmup_slots < slots".into());
        }
        if self.perturbation.cv.is_empty() || self.perturbation.cv.iter().any(|c| !(0.0..=0.5).contains(c)) {
            return bad("perturbation.cv must be a non-empty list within [0, 0.5]".into());
        }
        if self.jobs == 0 {
            return bad("jobs must be at least 1".into());
        }
        Ok(())
    }

    pub fn epsilon(&self) -> Epsilon {
        Epsilon::new(self.epsilon).expect("validated")
    }

    /// The experiment's single library.
    pub fn build_library(&self) -> Result<ModelLibrary, HarnessError> {
        Ok(generate_library(&self.library.resolve()?, derive_seed(self.seed, &[stream::LIBRARY]))?)
    }

    pub fn replicate_seed(&self, replicate: usize) -> u64 {
        derive_seed(self.seed, &[stream::REPLICATE, replicate as u64])
    }

    pub fn topology_config(&self, point: &AxisPoint) -> TopologyConfig {
        let n = &self.network;
        TopologyConfig {
            servers: point.servers,
            users: point.users,
            capacity_bytes: point.capacity_bytes(),
            area_side_m: n.area_side_m,
            coverage_radius_m: n.coverage_radius_m,
            bandwidth_hz: n.bandwidth_hz,
            power_dbm: n.power_dbm,
            channel: n.channel,
            mobility: MobilityPattern::Static,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_validate() {
        let cfg = ExperimentConfig::with_seed(3);
        cfg.validate().unwrap();
        assert_eq!(cfg.replicates, 20);
        assert_eq!(cfg.fading_draws, 100);
        assert_eq!(cfg.mobility.slots(), 1440);
        let back = ExperimentConfig::from_toml(&cfg.to_toml()).unwrap();
        assert_eq!(back, cfg);
    }

    #[test]
    fn axis_points_are_unique() {
        let s = SweepSettings {
            base: AxisPoint {
                capacity_gb: 1.0,
                servers: 6,
                users: 20,
            },
            capacity_gb: vec![0.25, 0.5, 1.0, 2.0],
            servers: vec![4, 6, 8],
            users: vec![10, 20, 30],
        };
        assert_eq!(s.points().len(), 4 + 2 + 2);
    }

    #[test]
    fn rejects_bad_configs() {
        for text in [
            "seed = 1\nreplicates = 0",
            "seed = 1\nalgorithms = []",
            "seed = 1\nalgorithms = [\"lru\"]",
            "seed = 1\nepsilon = 2.0",
            "seed = 1\nunknown = 3",
            "seed = 1\n[workload]\nzipf_s = 0.0",
            "seed = 1\n[perturbation]\ncv = [0.7]",
            "seed = 1\n[library]\npreset = \"resnet-two-stage\"\nmodels_per_root = 3",
        ] {
            assert!(ExperimentConfig::from_toml(text).is_err(), "{text}");
        }
    }

    #[test]
    fn custom_library_section() {
        let text = r#"
seed = 5
[library]
[library.custom]
kind = "adapter"
[[library.custom.backbones]]
name = "b"
backbone_bytes = 1000
adapter_bytes = [10, 20]
models = 4
"#;
        let cfg = ExperimentConfig::from_toml(text).unwrap();
        assert_eq!(cfg.build_library().unwrap().num_models(), 4);
    }
}
