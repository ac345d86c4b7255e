//! Server-by-server placement for libraries with few shared blocks.
//!
//! Each server, in index order, solves its own subproblem given the
//! decisions of the servers before it: for every affordable combination `N`
//! of shared blocks, a rounding DP picks the covered models with the most
//! (rounded) fresh hits that fit in the space left after `N`; the best
//! combination by unrounded hits wins.

use std::time::Instant;

use crate::library::{BlockCombination, ModelLibrary, DEFAULT_ENUMERATION_CAP};
use crate::network::Topology;
use crate::objective::{round_hits, Epsilon, HitModel, Placement, Workload};

use super::dp::{DpTable, DEFAULT_DP_CELL_CAP};
use super::{finish, Algorithm, Diagnostics, Solution, SolverError};

/// How combinations of shared blocks are enumerated.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Enumeration {
    /// Prefix combinations when the shared blocks form disjoint chains,
    /// every subset otherwise.
    #[default]
    Auto,
    /// Every subset of the shared blocks.
    Full,
    /// Prefix combinations only; fails if the library is not a chain forest.
    Prefix,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SpecOptions {
    pub enumeration: Enumeration,
    /// Largest `|J^sh|` accepted for full enumeration.
    pub enumeration_cap: usize,
    pub dp_cell_cap: u128,
}

impl Default for SpecOptions {
    fn default() -> Self {
        Self {
            enumeration: Enumeration::Auto,
            enumeration_cap: DEFAULT_ENUMERATION_CAP,
            dp_cell_cap: DEFAULT_DP_CELL_CAP,
        }
    }
}

/// Best placement for one server.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SubproblemSolution {
    /// Selected models, ascending.
    pub models: Vec<usize>,
    /// Fresh (unrounded) hits of the selection.
    pub hits: u64,
    /// Index of the winning combination in the candidate list.
    pub combination: usize,
    pub combinations_evaluated: u64,
    pub dp_cells: u64,
}

pub(crate) fn combinations(
    lib: &ModelLibrary,
    capacity: u64,
    opts: &SpecOptions,
) -> Result<Vec<BlockCombination>, SolverError> {
    let forest = match opts.enumeration {
        Enumeration::Full => None,
        Enumeration::Auto => lib.detect_chain_forest(),
        Enumeration::Prefix => Some(lib.detect_chain_forest().ok_or_else(|| {
            SolverError::Invariant("prefix enumeration requested but shared blocks are not chains".into())
        })?),
    };
    match forest {
        Some(f) => Ok(f.prefix_combinations(lib, capacity)),
        None => Ok(lib.enumerate_combinations(capacity, opts.enumeration_cap)?),
    }
}

/// Solves the subproblem of `server` given rows `< server` of `prior`.
/// `candidates` are combinations in canonical order; those larger than the
/// server's capacity are skipped.
pub fn solve_subproblem(
    lib: &ModelLibrary,
    topo: &Topology,
    hm: &HitModel,
    candidates: &[BlockCombination],
    prior: &Placement,
    server: usize,
    eps: Epsilon,
    dp_cell_cap: u128,
) -> Result<SubproblemSolution, SolverError> {
    let capacity = topo.servers[server].capacity_bytes;
    let u: Vec<u64> = (0..lib.num_models()).map(|i| hm.cache_hits(prior, server, i)).collect();
    let rounded = round_hits(&u, eps).values;
    let mut best = SubproblemSolution {
        models: Vec::new(),
        hits: 0,
        combination: 0,
        combinations_evaluated: 0,
        dp_cells: 0,
    };
    let mut best_found = false;
    for (idx, combo) in candidates.iter().enumerate() {
        if combo.size_bytes > capacity {
            continue;
        }
        best.combinations_evaluated += 1;
        let items: Vec<usize> = combo.covered_models.iter().copied().filter(|&i| u[i] > 0).collect();
        let granularity = items.iter().fold(0, |g, &i| gcd(g, rounded[i])).max(1);
        let weights: Vec<u64> = items.iter().map(|&i| rounded[i] / granularity).collect();
        let sizes: Vec<u64> = items.iter().map(|&i| lib.specific_size(i)).collect();
        let table = DpTable::fill(&weights, &sizes, dp_cell_cap)?;
        best.dp_cells += table.cells();
        let w_star = table.best_units(capacity - combo.size_bytes);
        let picked: Vec<usize> = table.backtrack(&weights, &sizes, w_star).into_iter().map(|e| items[e]).collect();
        let hits: u64 = picked.iter().map(|&i| u[i]).sum();
        if !best_found || hits > best.hits {
            best_found = true;
            best.models = picked;
            best.hits = hits;
            best.combination = idx;
        }
    }
    Ok(best)
}

fn gcd(mut a: u64, mut b: u64) -> u64 {
    while b != 0 {
        (a, b) = (b, a % b);
    }
    a
}

pub fn solve_spec(lib: &ModelLibrary, topo: &Topology, wl: &Workload, eps: Epsilon) -> Result<Solution, SolverError> {
    solve_spec_with(lib, topo, wl, eps, &SpecOptions::default())
}

pub fn solve_spec_with(
    lib: &ModelLibrary,
    topo: &Topology,
    wl: &Workload,
    eps: Epsilon,
    opts: &SpecOptions,
) -> Result<Solution, SolverError> {
    let started = Instant::now();
    let hm = HitModel::new(lib, topo, wl)?;
    let max_capacity = topo.servers.iter().map(|s| s.capacity_bytes).max().unwrap_or(0);
    let candidates = combinations(lib, max_capacity, opts)?;
    let mut x = Placement::empty(topo.num_servers(), lib.num_models());
    let mut diag = Diagnostics::default();
    let mut per_server_hits = Vec::with_capacity(topo.num_servers());
    for m in 0..topo.num_servers() {
        let sub = solve_subproblem(lib, topo, &hm, &candidates, &x, m, eps, opts.dp_cell_cap)?;
        diag.combinations += sub.combinations_evaluated;
        diag.dp_cells += sub.dp_cells;
        for &i in &sub.models {
            x.set(m, i, true);
        }
        per_server_hits.push(sub.hits);
    }
    let sol = finish(Algorithm::Spec, Some(eps.value()), lib, topo, &hm, x, diag, started)?;
    let reported: Vec<u64> = sol.report.per_server.iter().map(|s| s.hit_mass).collect();
    if reported != per_server_hits || per_server_hits.iter().sum::<u64>() != sol.report.hit_mass {
        return Err(SolverError::Invariant(
            "per-server hits do not add up to the hit mass of the union placement".into(),
        ));
    }
    Ok(sol)
}
