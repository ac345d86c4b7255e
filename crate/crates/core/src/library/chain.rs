//! Prefix-chain structure of shared blocks (bottom-layer freezing).
//!
//! When all models fine-tuned from one pre-trained root freeze a run of its
//! bottom layers, every model's shared set is a prefix of the root's layer
//! sequence. Combination enumeration then only needs the `kappa + 1`
//! prefixes instead of all `2^kappa` subsets: a non-prefix subset covers the
//! same models as its longest contained prefix while costing more bytes.

use std::collections::BTreeMap;

use itertools::Itertools;

use super::{BlockCombination, ModelLibrary};

/// A single chain: shared blocks in prefix order. `kappa` is the chain length.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct ChainDescriptor {
    pub order: Vec<usize>,
}

impl ChainDescriptor {
    /// Maximum shared prefix length.
    pub fn kappa(&self) -> usize {
        self.order.len()
    }
}

/// Disjoint chains, one per pre-trained root.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct ChainForest {
    pub chains: Vec<ChainDescriptor>,
}

impl ChainForest {
    /// Number of prefix combinations, `prod(kappa_s + 1)`, saturating.
    pub fn combination_count(&self) -> usize {
        self.chains
            .iter()
            .fold(1usize, |acc, c| acc.saturating_mul(c.kappa() + 1))
    }

    /// Every union of one prefix per chain with `d_N <= capacity`, in the
    /// same canonical order as full enumeration (subset size, then
    /// lexicographic block indices).
    pub fn prefix_combinations(&self, lib: &ModelLibrary, capacity: u64) -> Vec<BlockCombination> {
        let mut sets: Vec<Vec<usize>> = self
            .chains
            .iter()
            .map(|c| 0..=c.kappa())
            .multi_cartesian_product()
            .map(|lengths| {
                let mut blocks: Vec<usize> = self
                    .chains
                    .iter()
                    .zip(&lengths)
                    .flat_map(|(c, &len)| c.order[..len].iter().copied())
                    .collect();
                blocks.sort_unstable();
                blocks
            })
            .filter(|blocks| blocks.iter().map(|&j| lib.block_size(j)).sum::<u64>() <= capacity)
            .collect();
        // Older itertools yields nothing for zero iterators; newer yields `[]`.
        if sets.is_empty() && self.chains.is_empty() {
            sets.push(Vec::new());
        }
        sets.sort_by(|a, b| a.len().cmp(&b.len()).then_with(|| a.cmp(b)));
        sets.into_iter().map(|s| lib.combination(s)).collect()
    }
}

fn find(parent: &mut [usize], mut x: usize) -> usize {
    while parent[x] != x {
        parent[x] = parent[parent[x]];
        x = parent[x];
    }
    x
}

pub(super) fn detect_forest(lib: &ModelLibrary) -> Option<ChainForest> {
    let n = lib.num_blocks();
    let mut parent: Vec<usize> = (0..n).collect();
    let shared: Vec<Vec<usize>> = (0..lib.num_models()).map(|i| lib.shared_blocks_of(i)).collect();
    for set in &shared {
        for w in set.windows(2) {
            let (a, b) = (find(&mut parent, w[0]), find(&mut parent, w[1]));
            if a != b {
                parent[a.max(b)] = a.min(b);
            }
        }
    }

    let mut groups: BTreeMap<usize, Vec<usize>> = BTreeMap::new();
    for (i, set) in shared.iter().enumerate() {
        if let Some(&first) = set.first() {
            groups.entry(find(&mut parent, first)).or_default().push(i);
        }
    }

    let mut chains = Vec::with_capacity(groups.len());
    for (_, mut members) in groups {
        members.sort_by_key(|&i| (shared[i].len(), i));
        let mut order: Vec<usize> = Vec::new();
        let mut in_order = vec![false; n];
        for &i in &members {
            let set = &shared[i];
            // Nested sets: the previous prefix must be contained in this one.
            let contained = set.iter().filter(|&&j| in_order[j]).count();
            if contained != order.len() {
                return None;
            }
            for &j in set {
                if !in_order[j] {
                    in_order[j] = true;
                    order.push(j);
                }
            }
        }
        chains.push(ChainDescriptor { order });
    }
    Some(ChainForest { chains })
}
