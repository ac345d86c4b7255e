//! Exact optimum by enumeration, for small instances.
//!
//! Feasibility is per server and closed under removal, and the objective is
//! monotone, so some optimum uses an inclusion-maximal feasible row on every
//! server. The search enumerates those rows per server and walks their
//! product depth-first with a standalone-gain upper bound.

use std::time::Instant;

use crate::library::ModelLibrary;
use crate::network::Topology;
use crate::objective::{Coverage, HitModel, Placement, Workload};

use super::{finish, Algorithm, Diagnostics, Solution, SolverError};

/// Default bound on `M · I`.
pub const DEFAULT_ORACLE_CAP: usize = 22;

struct Rows {
    /// Inclusion-maximal feasible rows, as model lists in DFS order.
    maximal: Vec<Vec<usize>>,
    /// Largest feasible row size.
    widest: usize,
}

fn feasible_rows(lib: &ModelLibrary, capacity: u64) -> Rows {
    let n = lib.num_models();
    let mut rows = Rows {
        maximal: Vec::new(),
        widest: 0,
    };
    let mut counts = vec![0u32; lib.num_blocks()];
    let mut chosen = Vec::new();

    fn extra(lib: &ModelLibrary, counts: &[u32], model: usize) -> u64 {
        lib.models()[model]
            .blocks
            .iter()
            .filter(|&&j| counts[j] == 0)
            .map(|&j| lib.block_size(j))
            .sum()
    }

    #[allow(clippy::too_many_arguments)]
    fn walk(
        lib: &ModelLibrary,
        capacity: u64,
        n: usize,
        start: usize,
        used: u64,
        counts: &mut Vec<u32>,
        chosen: &mut Vec<usize>,
        rows: &mut Rows,
    ) {
        rows.widest = rows.widest.max(chosen.len());
        let fits = |counts: &[u32], i: usize| used + extra(lib, counts, i) <= capacity;
        let maximal = (0..n).all(|i| chosen.contains(&i) || !fits(counts, i));
        if maximal {
            rows.maximal.push(chosen.clone());
        }
        for i in start..n {
            let add = extra(lib, counts, i);
            if used + add > capacity {
                continue;
            }
            for &j in &lib.models()[i].blocks {
                counts[j] += 1;
            }
            chosen.push(i);
            walk(lib, capacity, n, i + 1, used + add, counts, chosen, rows);
            chosen.pop();
            for &j in &lib.models()[i].blocks {
                counts[j] -= 1;
            }
        }
    }

    walk(lib, capacity, n, 0, 0, &mut counts, &mut chosen, &mut rows);
    rows
}

struct Search<'a> {
    hm: &'a HitModel,
    rows: Vec<Rows>,
    /// `bound[m]`: sum over servers `>= m` of their best standalone mass.
    bound: Vec<u64>,
    best_mass: u64,
    best_rows: Vec<usize>,
    current: Vec<usize>,
    scored: u64,
}

impl Search<'_> {
    fn dfs(&mut self, server: usize, cov: &Coverage<'_>) {
        if server == self.rows.len() {
            self.scored += 1;
            if cov.mass() > self.best_mass || self.best_rows.is_empty() {
                self.best_mass = cov.mass();
                self.best_rows = self.current.clone();
            }
            return;
        }
        if !self.best_rows.is_empty() && cov.mass() + self.bound[server] <= self.best_mass {
            return;
        }
        for r in 0..self.rows[server].maximal.len() {
            let mut next = cov.clone();
            for &i in &self.rows[server].maximal[r] {
                next.add(server, i);
            }
            self.current.push(r);
            self.dfs(server + 1, &next);
            self.current.pop();
        }
    }
}

pub fn solve_exhaustive(lib: &ModelLibrary, topo: &Topology, wl: &Workload) -> Result<Solution, SolverError> {
    solve_exhaustive_with(lib, topo, wl, DEFAULT_ORACLE_CAP)
}

/// Optimal placement; refuses when `M · I > cap`. Also reports `Γ`, the
/// largest cardinality of any feasible placement.
pub fn solve_exhaustive_with(
    lib: &ModelLibrary,
    topo: &Topology,
    wl: &Workload,
    cap: usize,
) -> Result<Solution, SolverError> {
    let size = topo.num_servers() * lib.num_models();
    if size > cap {
        return Err(SolverError::OracleCap { size, cap });
    }
    let started = Instant::now();
    let hm = HitModel::new(lib, topo, wl)?;
    let rows: Vec<Rows> = topo.servers.iter().map(|s| feasible_rows(lib, s.capacity_bytes)).collect();
    let gamma: usize = rows.iter().map(|r| r.widest).sum();
    let empty = Coverage::new(&hm);
    let standalone: Vec<u64> = rows
        .iter()
        .enumerate()
        .map(|(m, r)| {
            r.maximal
                .iter()
                .map(|row| {
                    let mut c = empty.clone();
                    row.iter().map(|&i| c.add(m, i)).sum::<u64>()
                })
                .max()
                .unwrap_or(0)
        })
        .collect();
    let mut bound = vec![0u64; rows.len() + 1];
    for m in (0..rows.len()).rev() {
        bound[m] = bound[m + 1] + standalone[m];
    }
    let mut search = Search {
        hm: &hm,
        rows,
        bound,
        best_mass: 0,
        best_rows: Vec::new(),
        current: Vec::new(),
        scored: 0,
    };
    search.dfs(0, &empty);
    let mut x = Placement::empty(topo.num_servers(), lib.num_models());
    for (m, &r) in search.best_rows.iter().enumerate() {
        for &i in &search.rows[m].maximal[r] {
            x.set(m, i, true);
        }
    }
    debug_assert_eq!(search.hm.hit_mass(&x), search.best_mass);
    let diag = Diagnostics {
        gamma: Some(gamma as u64),
        placements_scored: search.scored,
        ..Diagnostics::default()
    };
    finish(Algorithm::Oracle, None, lib, topo, &hm, x, diag, started)
}
