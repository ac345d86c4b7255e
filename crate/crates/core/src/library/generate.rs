//! Synthetic library generators.
//!
//! Three constructions mirror common ways parameter-sharing libraries arise:
//!
//! * `chain`: bottom-layer freezing. Each structure has a pre-trained root;
//!   every downstream model keeps a random-length prefix of the root's layers
//!   and owns fine-tuned copies of the rest plus a task head.
//! * `adapter`: LoRA-style. Downstream models keep the whole pre-trained
//!   backbone as one block and add a small adapter block.
//! * `two-stage`: a full fine-tune per (structure, superclass) produces
//!   intermediate models, which are then fine-tuned per class with
//!   bottom-layer freezing. The shared-block count grows with the number of
//!   superclasses.
//!
//! Byte sizes are synthetic. Layer sizes grow geometrically with depth, with
//! seeded jitter, scaled so the layers sum exactly to the configured total.

use rand::seq::IndexedRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

use super::{LibraryError, Model, ModelLibrary, ParameterBlock, Provenance};
use crate::seed::{rng_for, stream};

/// LoRA adapter sizes in bytes for GPT-2 small.
pub const GPT2_SMALL_ADAPTER_BYTES: [u64; 7] =
    [0, 188_348, 335_804, 630_716, 1_220_540, 2_400_188, 4_759_484];
/// LoRA adapter sizes in bytes for GPT-2 medium.
pub const GPT2_MEDIUM_ADAPTER_BYTES: [u64; 7] =
    [0, 470_487, 863_703, 1_650_135, 3_222_999, 6_368_727, 12_660_247];
/// LoRA adapter sizes in bytes for GPT-2 large.
pub const GPT2_LARGE_ADAPTER_BYTES: [u64; 7] =
    [0, 852_175, 1_589_455, 3_064_015, 6_013_135, 11_911_375, 23_708_047];

fn default_growth() -> f64 {
    4.0
}

fn default_head_bytes() -> u64 {
    51_300
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum LibraryConfig {
    Chain(ChainConfig),
    Adapter(AdapterConfig),
    TwoStage(TwoStageConfig),
}

impl LibraryConfig {
    pub fn kind(&self) -> &'static str {
        match self {
            LibraryConfig::Chain(_) => "chain",
            LibraryConfig::Adapter(_) => "adapter",
            LibraryConfig::TwoStage(_) => "two-stage",
        }
    }

    /// ResNet-18/34/50-like chain library: 100 models per structure, frozen
    /// prefix ranges [29,40], [49,72], [87,106]. Layer counts and byte totals
    /// approximate fp32 parameter tensors.
    pub fn resnet_chain() -> Self {
        let s = |name: &str, layers, total_bytes, lo, hi| ChainStructure {
            name: name.into(),
            layers,
            total_bytes,
            frozen_min: lo,
            frozen_max: hi,
            models: 100,
            layer_growth: default_growth(),
        };
        LibraryConfig::Chain(ChainConfig {
            structures: vec![
                s("resnet18", 62, 46_800_000, 29, 40),
                s("resnet34", 110, 87_300_000, 49, 72),
                s("resnet50", 161, 102_500_000, 87, 106),
            ],
            head_bytes: default_head_bytes(),
        })
    }

    /// GPT-2 small/medium/large adapter library with 100 LoRA models and 10
    /// fully fine-tuned models per backbone. Backbone sizes are synthetic (4-bit quantized parameter
    /// counts), not measured values.
    pub fn gpt2_adapter() -> Self {
        let b = |name: &str, bytes, sizes: &[u64]| AdapterBackbone {
            name: name.into(),
            backbone_bytes: bytes,
            adapter_bytes: sizes.to_vec(),
            models: 100,
            full_finetune_models: 10,
        };
        LibraryConfig::Adapter(AdapterConfig {
            backbones: vec![
                b("gpt2-small", 62_000_000, &GPT2_SMALL_ADAPTER_BYTES),
                b("gpt2-medium", 177_500_000, &GPT2_MEDIUM_ADAPTER_BYTES),
                b("gpt2-large", 387_000_000, &GPT2_LARGE_ADAPTER_BYTES),
            ],
        })
    }

    /// ResNet-like two-stage library: 3 structures x 3 superclasses x 5
    /// classes = 45 models.
    pub fn resnet_two_stage() -> Self {
        let s = |name: &str, layers, total_bytes| TwoStageStructure {
            name: name.into(),
            layers,
            total_bytes,
            layer_growth: default_growth(),
        };
        LibraryConfig::TwoStage(TwoStageConfig {
            structures: vec![
                s("resnet18", 62, 46_800_000),
                s("resnet34", 110, 87_300_000),
                s("resnet50", 161, 102_500_000),
            ],
            superclasses: 3,
            classes_per_superclass: 5,
            frozen_min: 0,
            frozen_max: None,
            head_bytes: default_head_bytes(),
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ChainConfig {
    pub structures: Vec<ChainStructure>,
    /// Size of each model's private task head; 0 disables heads.
    #[serde(default = "default_head_bytes")]
    pub head_bytes: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ChainStructure {
    pub name: String,
    pub layers: usize,
    pub total_bytes: u64,
    pub frozen_min: usize,
    pub frozen_max: usize,
    pub models: usize,
    #[serde(default = "default_growth")]
    pub layer_growth: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AdapterConfig {
    pub backbones: Vec<AdapterBackbone>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AdapterBackbone {
    pub name: String,
    pub backbone_bytes: u64,
    /// Candidate adapter sizes; a 0 entry stands for the bare backbone,
    /// emitted at most once.
    pub adapter_bytes: Vec<u64>,
    pub models: usize,
    /// Extra models fine-tuned in full: one private block of backbone size.
    #[serde(default)]
    pub full_finetune_models: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TwoStageConfig {
    pub structures: Vec<TwoStageStructure>,
    pub superclasses: usize,
    pub classes_per_superclass: usize,
    #[serde(default)]
    pub frozen_min: usize,
    /// Defaults to the structure's layer count.
    #[serde(default)]
    pub frozen_max: Option<usize>,
    #[serde(default = "default_head_bytes")]
    pub head_bytes: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TwoStageStructure {
    pub name: String,
    pub layers: usize,
    pub total_bytes: u64,
    #[serde(default = "default_growth")]
    pub layer_growth: f64,
}

fn invalid(msg: impl Into<String>) -> LibraryError {
    LibraryError::InvalidConfig(msg.into())
}

/// Layer sizes summing to `total`, each at least one byte.
fn layer_sizes<R: Rng>(rng: &mut R, layers: usize, total: u64, growth: f64) -> Vec<u64> {
    let weights: Vec<f64> = (0..layers)
        .map(|l| {
            let depth = if layers > 1 { l as f64 / (layers - 1) as f64 } else { 0.0 };
            (growth * depth).exp() * rng.random_range(0.5..1.5)
        })
        .collect();
    let sum: f64 = weights.iter().sum();
    let spare = total - layers as u64;
    let mut sizes: Vec<u64> = weights
        .iter()
        .map(|w| 1 + (spare as f64 * w / sum).floor() as u64)
        .collect();
    let assigned: u64 = sizes.iter().sum();
    *sizes.last_mut().unwrap() += total - assigned;
    sizes
}

#[derive(Default)]
struct Builder {
    blocks: Vec<ParameterBlock>,
    models: Vec<Model>,
}

impl Builder {
    fn block(&mut self, id: String, size_bytes: u64) -> usize {
        self.blocks.push(ParameterBlock { id, size_bytes });
        self.blocks.len() - 1
    }

    fn model(&mut self, id: String, blocks: Vec<usize>) {
        self.models.push(Model { id, blocks });
    }

    /// Model keeping `frozen` layers of `parent` and owning the rest.
    fn fine_tune(&mut self, id: String, parent: &[usize], sizes: &[u64], frozen: usize, head: u64) {
        let mut blocks = parent[..frozen].to_vec();
        for (l, &size) in sizes.iter().enumerate().skip(frozen) {
            blocks.push(self.block(format!("{id}/L{l}"), size));
        }
        if head > 0 {
            blocks.push(self.block(format!("{id}/head"), head));
        }
        self.model(id, blocks);
    }
}

fn check_structure(name: &str, layers: usize, total: u64, growth: f64) -> Result<(), LibraryError> {
    if layers == 0 {
        return Err(invalid(format!("structure `{name}` has no layers")));
    }
    if total < layers as u64 {
        return Err(invalid(format!("structure `{name}`: total_bytes below one byte per layer")));
    }
    if !growth.is_finite() {
        return Err(invalid(format!("structure `{name}`: layer_growth must be finite")));
    }
    Ok(())
}

/// Generates a library. Pure in `(config, seed)`.
pub fn generate_library(config: &LibraryConfig, seed: u64) -> Result<ModelLibrary, LibraryError> {
    let mut b = Builder::default();
    match config {
        LibraryConfig::Chain(cfg) => {
            if cfg.structures.is_empty() {
                return Err(invalid("chain config needs at least one structure"));
            }
            for (s_idx, s) in cfg.structures.iter().enumerate() {
                check_structure(&s.name, s.layers, s.total_bytes, s.layer_growth)?;
                if s.frozen_min > s.frozen_max || s.frozen_max > s.layers {
                    return Err(invalid(format!(
                        "structure `{}`: need frozen_min <= frozen_max <= layers",
                        s.name
                    )));
                }
                let mut rng = rng_for(seed, &[stream::LIBRARY, s_idx as u64]);
                let sizes = layer_sizes(&mut rng, s.layers, s.total_bytes, s.layer_growth);
                let frozen: Vec<usize> =
                    (0..s.models).map(|_| rng.random_range(s.frozen_min..=s.frozen_max)).collect();
                let deepest = frozen.iter().copied().max().unwrap_or(0);
                let root: Vec<usize> = (0..deepest)
                    .map(|l| b.block(format!("{}/root/L{l}", s.name), sizes[l]))
                    .collect();
                for (n, &f) in frozen.iter().enumerate() {
                    b.fine_tune(format!("{}/m{n}", s.name), &root, &sizes, f, cfg.head_bytes);
                }
            }
        }
        LibraryConfig::Adapter(cfg) => {
            if cfg.backbones.is_empty() {
                return Err(invalid("adapter config needs at least one backbone"));
            }
            for (s_idx, bb) in cfg.backbones.iter().enumerate() {
                if bb.adapter_bytes.is_empty() {
                    return Err(invalid(format!("backbone `{}`: adapter sizes empty", bb.name)));
                }
                if bb.backbone_bytes == 0 {
                    return Err(invalid(format!("backbone `{}`: zero backbone size", bb.name)));
                }
                let positive: Vec<u64> = bb.adapter_bytes.iter().copied().filter(|&a| a > 0).collect();
                if positive.is_empty() && bb.models > 1 {
                    return Err(invalid(format!(
                        "backbone `{}`: only the bare backbone is available but {} models requested",
                        bb.name, bb.models
                    )));
                }
                let mut rng = rng_for(seed, &[stream::LIBRARY, s_idx as u64]);
                let backbone = b.block(format!("{}/backbone", bb.name), bb.backbone_bytes);
                let mut bare_used = false;
                for n in 0..bb.models {
                    let id = format!("{}/m{n}", bb.name);
                    let mut size = *bb.adapter_bytes.choose(&mut rng).unwrap();
                    if size == 0 && bare_used {
                        size = *positive.choose(&mut rng).unwrap();
                    }
                    if size == 0 {
                        bare_used = true;
                        b.model(id, vec![backbone]);
                    } else {
                        let adapter = b.block(format!("{id}/lora"), size);
                        b.model(id, vec![backbone, adapter]);
                    }
                }
                for n in 0..bb.full_finetune_models {
                    let id = format!("{}/full{n}", bb.name);
                    let own = b.block(format!("{id}/weights"), bb.backbone_bytes);
                    b.model(id, vec![own]);
                }
            }
        }
        LibraryConfig::TwoStage(cfg) => {
            if cfg.structures.is_empty() {
                return Err(invalid("two-stage config needs at least one structure"));
            }
            for (s_idx, s) in cfg.structures.iter().enumerate() {
                check_structure(&s.name, s.layers, s.total_bytes, s.layer_growth)?;
                let hi = cfg.frozen_max.unwrap_or(s.layers);
                if cfg.frozen_min > hi || hi > s.layers {
                    return Err(invalid(format!(
                        "structure `{}`: need frozen_min <= frozen_max <= layers",
                        s.name
                    )));
                }
                let mut rng = rng_for(seed, &[stream::LIBRARY, s_idx as u64]);
                let sizes = layer_sizes(&mut rng, s.layers, s.total_bytes, s.layer_growth);
                for c in 0..cfg.superclasses {
                    let frozen: Vec<usize> = (0..cfg.classes_per_superclass)
                        .map(|_| rng.random_range(cfg.frozen_min..=hi))
                        .collect();
                    let deepest = frozen.iter().copied().max().unwrap_or(0);
                    let stage1: Vec<usize> = (0..deepest)
                        .map(|l| b.block(format!("{}/c{c}/L{l}", s.name), sizes[l]))
                        .collect();
                    for (q, &f) in frozen.iter().enumerate() {
                        b.fine_tune(format!("{}/c{c}/q{q}", s.name), &stage1, &sizes, f, cfg.head_bytes);
                    }
                }
            }
        }
    }
    ModelLibrary::new(
        b.blocks,
        b.models,
        Provenance {
            generator: config.kind().to_owned(),
            seed: Some(seed),
        },
    )
}
