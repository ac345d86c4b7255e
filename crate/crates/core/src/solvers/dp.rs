//! Min-bytes knapsack table over rounded hit counts.
//!
//! `T(e, w)` is the fewest specific-block bytes with which some subset of the
//! first `e` items reaches exactly `w` hit units.

use super::SolverError;

/// Sentinel for unreachable cells.
pub const INFEASIBLE: u64 = u64::MAX;

/// Default bound on `(items + 1) × (units + 1)`.
pub const DEFAULT_DP_CELL_CAP: u128 = 50_000_000;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DpTable {
    rows: usize,
    cols: usize,
    cells: Vec<u64>,
}

impl DpTable {
    /// Fills the table for items with hit units `weights` and byte costs
    /// `sizes`. Row `e` is derived from row `e − 1` only.
    pub fn fill(weights: &[u64], sizes: &[u64], cell_cap: u128) -> Result<Self, SolverError> {
        assert_eq!(weights.len(), sizes.len());
        let total: u128 = weights.iter().map(|&w| w as u128).sum();
        let rows = weights.len() + 1;
        let cells = rows as u128 * (total + 1);
        if cells > cell_cap {
            return Err(SolverError::DpTooLarge { cells, cap: cell_cap });
        }
        let cols = total as usize + 1;
        let mut t = vec![INFEASIBLE; rows * cols];
        t[0] = 0;
        for e in 1..rows {
            let (prev, cur) = t.split_at_mut(e * cols);
            let prev = &prev[(e - 1) * cols..];
            let cur = &mut cur[..cols];
            let (w_e, d_e) = (weights[e - 1] as usize, sizes[e - 1]);
            for w in 0..cols {
                let skip = prev[w];
                let take = if w >= w_e && prev[w - w_e] != INFEASIBLE {
                    prev[w - w_e] + d_e
                } else {
                    INFEASIBLE
                };
                cur[w] = skip.min(take);
            }
        }
        Ok(Self { rows, cols, cells: t })
    }

    pub fn items(&self) -> usize {
        self.rows - 1
    }

    /// Largest hit index in the table.
    pub fn max_units(&self) -> usize {
        self.cols - 1
    }

    pub fn cells(&self) -> u64 {
        (self.rows * self.cols) as u64
    }

    pub fn get(&self, e: usize, w: usize) -> u64 {
        self.cells[e * self.cols + w]
    }

    /// `ẇ* = max { w : T(n, w) <= budget }`.
    pub fn best_units(&self, budget: u64) -> usize {
        let n = self.items();
        (0..self.cols).rev().find(|&w| self.get(n, w) <= budget).unwrap_or(0)
    }

    /// Walks the table back from `(n, w_star)`. Item `e` is taken iff it fits
    /// in the remaining units and taking it is strictly cheaper than skipping
    /// it. The result attains exactly `w_star` units at `T(n, w_star)` bytes.
    pub fn backtrack(&self, weights: &[u64], sizes: &[u64], w_star: usize) -> Vec<usize> {
        let mut w = w_star;
        let mut chosen = Vec::new();
        for e in (1..=self.items()).rev() {
            let w_e = weights[e - 1] as usize;
            if w >= w_e {
                let with = self.get(e - 1, w - w_e);
                if with != INFEASIBLE && with + sizes[e - 1] < self.get(e - 1, w) {
                    chosen.push(e - 1);
                    w -= w_e;
                }
            }
        }
        assert_eq!(w, 0, "DP backtrack did not reach the origin");
        chosen.reverse();
        chosen
    }
}
