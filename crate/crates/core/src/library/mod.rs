//! Parameter-sharing model libraries.
//!
//! A library is a set of parameter blocks (each with an integer byte size)
//! and a set of models, each model being an ordered, duplicate-free list of
//! blocks. A block contained in two or more models is *shared*; a block
//! contained in exactly one model is *specific* to it. Storage accounting on
//! an edge server counts every block once, no matter how many cached models
//! reference it.

mod chain;
mod generate;
mod schema;

use std::collections::HashMap;

use itertools::Itertools;
use thiserror::Error;

pub use chain::{ChainDescriptor, ChainForest};
pub use generate::{
    generate_library, AdapterBackbone, AdapterConfig, ChainConfig, ChainStructure, LibraryConfig,
    TwoStageConfig, TwoStageStructure, GPT2_LARGE_ADAPTER_BYTES, GPT2_MEDIUM_ADAPTER_BYTES,
    GPT2_SMALL_ADAPTER_BYTES,
};
pub use schema::LIBRARY_FORMAT_VERSION;

/// Default bound on `|J^sh|` for exhaustive combination enumeration.
pub const DEFAULT_ENUMERATION_CAP: usize = 24;

#[derive(Debug, Error, PartialEq, Eq)]
pub enum LibraryError {
    #[error("duplicate block id `{0}`")]
    DuplicateBlock(String),
    #[error("duplicate model id `{0}`")]
    DuplicateModel(String),
    #[error("model `{0}` has no blocks")]
    EmptyModel(String),
    #[error("model `{model}` lists block `{block}` more than once")]
    RepeatedBlock { model: String, block: String },
    #[error("model `{model}` references unknown block `{block}`")]
    UnknownBlock { model: String, block: String },
    #[error("block `{0}` is referenced by a model but has size 0")]
    ZeroSizeBlock(String),
    #[error("unknown model `{0}`")]
    UnknownModel(String),
    #[error(
        "library has {shared} shared blocks; enumerating 2^{shared} combinations exceeds the cap of {cap} \
         (use the general-case greedy solver instead)"
    )]
    EnumerationCap { shared: usize, cap: usize },
    #[error("invalid generator config: {0}")]
    InvalidConfig(String),
    #[error("library file: {0}")]
    Format(String),
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ParameterBlock {
    pub id: String,
    pub size_bytes: u64,
}

/// A model as an ordered list of block indices into its library.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Model {
    pub id: String,
    pub blocks: Vec<usize>,
}

/// Where a library came from. Carried through serialization.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct Provenance {
    pub generator: String,
    pub seed: Option<u64>,
}

/// An immutable, validated model library.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ModelLibrary {
    blocks: Vec<ParameterBlock>,
    models: Vec<Model>,
    /// Inverse index `I_j`: models containing block `j`, ascending.
    block_models: Vec<Vec<usize>>,
    provenance: Provenance,
}

/// One combination `N` of shared blocks with the models it fully covers.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BlockCombination {
    /// Block indices in `N`, ascending.
    pub blocks: Vec<usize>,
    /// Models whose shared blocks all lie in `N`, ascending.
    pub covered_models: Vec<usize>,
    /// `d_N`.
    pub size_bytes: u64,
}

impl ModelLibrary {
    /// Builds a library from blocks and models given as block-id lists.
    pub fn from_ids(
        blocks: Vec<ParameterBlock>,
        models: Vec<(String, Vec<String>)>,
        provenance: Provenance,
    ) -> Result<Self, LibraryError> {
        let mut index = HashMap::with_capacity(blocks.len());
        for (j, b) in blocks.iter().enumerate() {
            if index.insert(b.id.clone(), j).is_some() {
                return Err(LibraryError::DuplicateBlock(b.id.clone()));
            }
        }
        let models = models
            .into_iter()
            .map(|(id, ids)| {
                let blocks = ids
                    .iter()
                    .map(|b| {
                        index.get(b).copied().ok_or_else(|| LibraryError::UnknownBlock {
                            model: id.clone(),
                            block: b.clone(),
                        })
                    })
                    .collect::<Result<Vec<_>, _>>()?;
                Ok(Model { id, blocks })
            })
            .collect::<Result<Vec<_>, LibraryError>>()?;
        Self::new(blocks, models, provenance)
    }

    /// Builds a library from blocks and index-based models, checking every
    /// structural invariant.
    pub fn new(
        blocks: Vec<ParameterBlock>,
        models: Vec<Model>,
        provenance: Provenance,
    ) -> Result<Self, LibraryError> {
        let mut seen = HashMap::new();
        for b in &blocks {
            if seen.insert(b.id.as_str(), ()).is_some() {
                return Err(LibraryError::DuplicateBlock(b.id.clone()));
            }
        }
        let mut seen_models = HashMap::new();
        let mut block_models = vec![Vec::new(); blocks.len()];
        for (i, m) in models.iter().enumerate() {
            if seen_models.insert(m.id.as_str(), ()).is_some() {
                return Err(LibraryError::DuplicateModel(m.id.clone()));
            }
            if m.blocks.is_empty() {
                return Err(LibraryError::EmptyModel(m.id.clone()));
            }
            for &j in &m.blocks {
                let Some(block) = blocks.get(j) else {
                    return Err(LibraryError::UnknownBlock {
                        model: m.id.clone(),
                        block: format!("#{j}"),
                    });
                };
                if block.size_bytes == 0 {
                    return Err(LibraryError::ZeroSizeBlock(block.id.clone()));
                }
                let owners: &mut Vec<usize> = &mut block_models[j];
                if owners.last() == Some(&i) {
                    return Err(LibraryError::RepeatedBlock {
                        model: m.id.clone(),
                        block: block.id.clone(),
                    });
                }
                owners.push(i);
            }
        }
        Ok(Self {
            blocks,
            models,
            block_models,
            provenance,
        })
    }

    pub fn blocks(&self) -> &[ParameterBlock] {
        &self.blocks
    }

    pub fn models(&self) -> &[Model] {
        &self.models
    }

    pub fn num_blocks(&self) -> usize {
        self.blocks.len()
    }

    pub fn num_models(&self) -> usize {
        self.models.len()
    }

    pub fn provenance(&self) -> &Provenance {
        &self.provenance
    }

    pub fn model_index(&self, id: &str) -> Result<usize, LibraryError> {
        self.models
            .iter()
            .position(|m| m.id == id)
            .ok_or_else(|| LibraryError::UnknownModel(id.to_owned()))
    }

    /// `I_j`, ascending.
    pub fn models_containing(&self, block: usize) -> &[usize] {
        &self.block_models[block]
    }

    pub fn block_size(&self, block: usize) -> u64 {
        self.blocks[block].size_bytes
    }

    pub fn is_shared(&self, block: usize) -> bool {
        self.block_models[block].len() >= 2
    }

    /// `J^sh = { j : |I_j| >= 2 }`, ascending block indices.
    pub fn shared_blocks(&self) -> Vec<usize> {
        (0..self.blocks.len()).filter(|&j| self.is_shared(j)).collect()
    }

    /// `D_i`: total size of model `i`.
    pub fn model_size(&self, model: usize) -> u64 {
        self.models[model].blocks.iter().map(|&j| self.blocks[j].size_bytes).sum()
    }

    /// `D(i)`: total size of the blocks specific to model `i`.
    pub fn specific_size(&self, model: usize) -> u64 {
        self.models[model]
            .blocks
            .iter()
            .filter(|&&j| !self.is_shared(j))
            .map(|&j| self.blocks[j].size_bytes)
            .sum()
    }

    /// Shared blocks of model `i`, in the model's own block order.
    pub fn shared_blocks_of(&self, model: usize) -> Vec<usize> {
        self.models[model].blocks.iter().copied().filter(|&j| self.is_shared(j)).collect()
    }

    /// Storage needed to hold every model in `models` with each block counted
    /// once (the shared accounting `g_m`).
    pub fn storage_of<I>(&self, models: I) -> u64
    where
        I: IntoIterator<Item = usize>,
    {
        let mut present = vec![false; self.blocks.len()];
        let mut total = 0;
        for i in models {
            for &j in &self.models[i].blocks {
                if !present[j] {
                    present[j] = true;
                    total += self.blocks[j].size_bytes;
                }
            }
        }
        total
    }

    /// Builds the combination record for a set of shared blocks.
    pub fn combination(&self, blocks: Vec<usize>) -> BlockCombination {
        let mut in_set = vec![false; self.blocks.len()];
        for &j in &blocks {
            in_set[j] = true;
        }
        let covered_models = (0..self.models.len())
            .filter(|&i| {
                self.models[i].blocks.iter().all(|&j| !self.is_shared(j) || in_set[j])
            })
            .collect();
        let size_bytes = blocks.iter().map(|&j| self.blocks[j].size_bytes).sum();
        BlockCombination {
            blocks,
            covered_models,
            size_bytes,
        }
    }

    /// Every subset `N` of `J^sh` with `d_N <= capacity`, in canonical order:
    /// by subset size, then lexicographically by block index.
    ///
    /// Refuses when `|J^sh| > cap`, since the candidate count is `2^|J^sh|`.
    pub fn enumerate_combinations(
        &self,
        capacity: u64,
        cap: usize,
    ) -> Result<Vec<BlockCombination>, LibraryError> {
        let shared = self.shared_blocks();
        if shared.len() > cap {
            return Err(LibraryError::EnumerationCap {
                shared: shared.len(),
                cap,
            });
        }
        let mut out = Vec::new();
        for r in 0..=shared.len() {
            for subset in shared.iter().copied().combinations(r) {
                let size: u64 = subset.iter().map(|&j| self.blocks[j].size_bytes).sum();
                if size <= capacity {
                    out.push(self.combination(subset));
                }
            }
        }
        Ok(out)
    }

    /// Detects whether every model's shared set is a prefix of one common
    /// ordered block sequence. See [`ChainDescriptor`].
    pub fn detect_chain(&self) -> Option<ChainDescriptor> {
        let forest = self.detect_chain_forest()?;
        match forest.chains.len() {
            0 => Some(ChainDescriptor::default()),
            1 => forest.chains.into_iter().next(),
            _ => None,
        }
    }

    /// Like [`detect_chain`](Self::detect_chain) but allows several disjoint
    /// roots, each with its own prefix chain.
    pub fn detect_chain_forest(&self) -> Option<ChainForest> {
        chain::detect_forest(self)
    }

    /// Sum of every block referenced by at least one model.
    pub fn referenced_bytes(&self) -> u64 {
        (0..self.blocks.len())
            .filter(|&j| !self.block_models[j].is_empty())
            .map(|j| self.blocks[j].size_bytes)
            .sum()
    }
}

#[cfg(test)]
pub(crate) mod tests {
    use super::*;

    pub(crate) fn lib(blocks: &[(&str, u64)], models: &[(&str, &[&str])]) -> ModelLibrary {
        ModelLibrary::from_ids(
            blocks
                .iter()
                .map(|&(id, size_bytes)| ParameterBlock {
                    id: id.into(),
                    size_bytes,
                })
                .collect(),
            models
                .iter()
                .map(|&(id, bs)| (id.to_string(), bs.iter().map(|s| s.to_string()).collect()))
                .collect(),
            Provenance::default(),
        )
        .unwrap()
    }

    /// Two pre-trained roots with branching fine-tunes. Root A is blocks
    /// 1..=5 with a branch at 3 (block 6); root B is blocks 10..=13.
    /// Block ids are the numbers; every model ends in private blocks.
    pub(crate) fn two_root_tree() -> ModelLibrary {
        let sizes: Vec<(String, u64)> = (1..=30).map(|n| (n.to_string(), 10 * n as u64)).collect();
        let blocks: Vec<(&str, u64)> = sizes.iter().map(|(s, n)| (s.as_str(), *n)).collect();
        lib(
            &blocks,
            &[
                ("1", &["1", "2", "3", "4", "5", "18", "19"]),
                ("2", &["1", "2", "3", "4", "5", "20"]),
                ("3", &["1", "2", "3", "6", "21"]),
                ("4", &["1", "2", "3", "6", "22", "23"]),
                ("5", &["10", "11", "12", "13", "24"]),
                ("6", &["10", "11", "12", "13", "25"]),
                ("7", &["10", "11", "26"]),
            ],
        )
    }

    #[test]
    fn disjoint_models_share_nothing() {
        let l = lib(&[("a", 1), ("b", 2), ("c", 3)], &[("x", &["a"]), ("y", &["b", "c"])]);
        assert!(l.shared_blocks().is_empty());
    }

    #[test]
    fn common_block_is_the_only_shared_one() {
        let l = lib(
            &[("b0", 5), ("p1", 1), ("p2", 1), ("p3", 1)],
            &[("m1", &["b0", "p1"]), ("m2", &["b0", "p2"]), ("m3", &["b0", "p3"])],
        );
        assert_eq!(l.shared_blocks(), vec![0]);
        assert_eq!(l.models_containing(0), &[0, 1, 2]);
    }

    #[test]
    fn two_root_tree_shared_blocks_and_specific_size() {
        let l = two_root_tree();
        let ids: Vec<&str> = l.shared_blocks().iter().map(|&j| l.blocks()[j].id.as_str()).collect();
        assert_eq!(ids, vec!["1", "2", "3", "4", "5", "6", "10", "11", "12", "13"]);
        // Model 1's specific blocks are {18, 19}.
        assert_eq!(l.specific_size(0), 180 + 190);
        assert!(l.detect_chain().is_none());
        assert!(l.detect_chain_forest().is_none());
    }

    #[test]
    fn specific_size_cases() {
        let l = lib(
            &[("s", 1000), ("a", 100), ("b", 50), ("t", 7)],
            &[("x", &["s", "a", "b"]), ("y", &["s", "t"]), ("z", &["s"])],
        );
        assert_eq!(l.specific_size(0), 150);
        assert_eq!(l.specific_size(2), 0);
        assert_eq!(l.model_size(0), 1150);
    }

    #[test]
    fn validation_errors() {
        let b = |id: &str, s| ParameterBlock {
            id: id.into(),
            size_bytes: s,
        };
        let err = ModelLibrary::from_ids(
            vec![b("a", 1), b("a", 2)],
            vec![],
            Provenance::default(),
        );
        assert_eq!(err, Err(LibraryError::DuplicateBlock("a".into())));
        let err = ModelLibrary::from_ids(
            vec![b("a", 1)],
            vec![("m".into(), vec!["a".into(), "a".into()])],
            Provenance::default(),
        );
        assert!(matches!(err, Err(LibraryError::RepeatedBlock { .. })));
        let err = ModelLibrary::from_ids(
            vec![b("a", 0)],
            vec![("m".into(), vec!["a".into()])],
            Provenance::default(),
        );
        assert_eq!(err, Err(LibraryError::ZeroSizeBlock("a".into())));
        let err = ModelLibrary::from_ids(vec![b("a", 1)], vec![("m".into(), vec![])], Provenance::default());
        assert_eq!(err, Err(LibraryError::EmptyModel("m".into())));
        let err = ModelLibrary::from_ids(
            vec![b("a", 1)],
            vec![("m".into(), vec!["q".into()])],
            Provenance::default(),
        );
        assert!(matches!(err, Err(LibraryError::UnknownBlock { .. })));
        assert!(two_root_tree().model_index("nope").is_err());
    }

    #[test]
    fn enumeration_of_empty_shared_set() {
        let l = lib(&[("a", 1), ("b", 2)], &[("x", &["a"]), ("y", &["b"])]);
        let combos = l.enumerate_combinations(u64::MAX, DEFAULT_ENUMERATION_CAP).unwrap();
        assert_eq!(combos.len(), 1);
        assert_eq!(combos[0].blocks, Vec::<usize>::new());
        assert_eq!(combos[0].covered_models, vec![0, 1]);
        assert_eq!(combos[0].size_bytes, 0);
    }

    #[test]
    fn enumeration_power_set_and_capacity_filter() {
        let l = lib(
            &[("a", 10), ("b", 20), ("p", 1), ("q", 1), ("r", 1)],
            &[("x", &["a", "b", "p"]), ("y", &["a", "q"]), ("z", &["b", "r"])],
        );
        let all = l.enumerate_combinations(u64::MAX, 24).unwrap();
        assert_eq!(all.len(), 4);
        let sizes: Vec<u64> = all.iter().map(|c| c.size_bytes).collect();
        assert_eq!(sizes, vec![0, 10, 20, 30]);
        assert_eq!(all[3].covered_models, vec![0, 1, 2]);
        assert_eq!(all[1].covered_models, vec![1]);
        let capped = l.enumerate_combinations(15, 24).unwrap();
        assert_eq!(capped.len(), 2);
        assert_eq!(
            l.enumerate_combinations(15, 1),
            Err(LibraryError::EnumerationCap { shared: 2, cap: 1 })
        );
    }

    #[test]
    fn storage_counts_shared_blocks_once() {
        let l = lib(
            &[("b1", 100), ("b2", 50), ("b3", 30)],
            &[("A", &["b1", "b2"]), ("B", &["b1", "b3"])],
        );
        assert_eq!(l.storage_of([0, 1]), 180);
        assert_eq!(l.storage_of([0]), l.model_size(0));
        assert_eq!(l.storage_of([]), 0);
    }
}
