//! Marginal-gain greedy placement for arbitrary sharing structures.

use std::time::Instant;

use crate::library::ModelLibrary;
use crate::network::Topology;
use crate::objective::{Accounting, Coverage, HitModel, Placement, Workload};

use super::{finish, Algorithm, Diagnostics, Solution, SolverError};

/// Per-server storage state under one accounting rule.
struct Store<'a> {
    lib: &'a ModelLibrary,
    accounting: Accounting,
    used: Vec<u64>,
    /// `servers × blocks` presence, only tracked for shared accounting.
    present: Vec<bool>,
}

impl<'a> Store<'a> {
    fn new(lib: &'a ModelLibrary, servers: usize, accounting: Accounting) -> Self {
        let present = match accounting {
            Accounting::Shared => vec![false; servers * lib.num_blocks()],
            Accounting::Independent => Vec::new(),
        };
        Self {
            lib,
            accounting,
            used: vec![0; servers],
            present,
        }
    }

    /// Extra bytes needed on `server` to add `model`.
    fn extra(&self, server: usize, model: usize) -> u64 {
        match self.accounting {
            Accounting::Independent => self.lib.model_size(model),
            Accounting::Shared => {
                let base = server * self.lib.num_blocks();
                self.lib.models()[model]
                    .blocks
                    .iter()
                    .filter(|&&j| !self.present[base + j])
                    .map(|&j| self.lib.block_size(j))
                    .sum()
            }
        }
    }

    fn add(&mut self, server: usize, model: usize) {
        self.used[server] += self.extra(server, model);
        if self.accounting == Accounting::Shared {
            let base = server * self.lib.num_blocks();
            for &j in &self.lib.models()[model].blocks {
                self.present[base + j] = true;
            }
        }
    }
}

/// Repeatedly caches the feasible `(m, i)` with the largest hit-mass gain,
/// ties to the lexicographically smallest pair, until no feasible pair adds
/// anything.
pub fn solve_greedy(
    lib: &ModelLibrary,
    topo: &Topology,
    wl: &Workload,
    accounting: Accounting,
) -> Result<Solution, SolverError> {
    let started = Instant::now();
    let hm = HitModel::new(lib, topo, wl)?;
    let (servers, models) = (topo.num_servers(), lib.num_models());
    let mut x = Placement::empty(servers, models);
    let mut cov = Coverage::new(&hm);
    let mut store = Store::new(lib, servers, accounting);
    let mut steps = 0;
    loop {
        let mut best: Option<(u64, usize, usize)> = None;
        for m in 0..servers {
            let room = topo.servers[m].capacity_bytes - store.used[m];
            for i in 0..models {
                if x.get(m, i) {
                    continue;
                }
                let gain = cov.gain(m, i);
                if gain == 0 || best.is_some_and(|(g, _, _)| gain <= g) {
                    continue;
                }
                if store.extra(m, i) <= room {
                    best = Some((gain, m, i));
                }
            }
        }
        let Some((_, m, i)) = best else { break };
        x.set(m, i, true);
        cov.add(m, i);
        store.add(m, i);
        steps += 1;
    }
    let algorithm = match accounting {
        Accounting::Shared => Algorithm::Gen,
        Accounting::Independent => Algorithm::Independent,
    };
    let diag = Diagnostics {
        greedy_steps: steps,
        ..Diagnostics::default()
    };
    finish(algorithm, None, lib, topo, &hm, x, diag, started)
}

/// Greedy with sharing-aware storage accounting.
pub fn solve_gen(lib: &ModelLibrary, topo: &Topology, wl: &Workload) -> Result<Solution, SolverError> {
    solve_greedy(lib, topo, wl, Accounting::Shared)
}

/// Greedy that stores every model in full, ignoring sharing.
pub fn solve_independent(lib: &ModelLibrary, topo: &Topology, wl: &Workload) -> Result<Solution, SolverError> {
    solve_greedy(lib, topo, wl, Accounting::Independent)
}
