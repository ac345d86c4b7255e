//! Placement algorithms and their common report type.

mod dp;
mod exhaustive;
mod greedy;
mod online;
mod spec;

use std::fmt;
use std::str::FromStr;
use std::time::Instant;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::library::{LibraryError, ModelLibrary};
use crate::network::Topology;
use crate::objective::{capacity_violation, Accounting, HitModel, ObjectiveError, Placement};

pub use dp::{DpTable, DEFAULT_DP_CELL_CAP, INFEASIBLE};
pub use exhaustive::{solve_exhaustive, solve_exhaustive_with, DEFAULT_ORACLE_CAP};
pub use greedy::{solve_gen, solve_independent, solve_greedy};
pub use online::{
    draw_requests, simulate_online, static_series, Admission, OnlineConfig, OnlinePolicy, OnlineRun, Request,
};
pub use spec::{solve_spec, solve_spec_with, solve_subproblem, Enumeration, SpecOptions, SubproblemSolution};

pub const REPORT_FORMAT: &str = "pscache-solve-report";
pub const REPORT_FORMAT_VERSION: u32 = 1;

#[derive(Debug, Error, PartialEq)]
pub enum SolverError {
    #[error(transparent)]
    Library(#[from] LibraryError),
    #[error(transparent)]
    Objective(#[from] ObjectiveError),
    #[error("exhaustive search over {size} placement variables exceeds the cap of {cap}")]
    OracleCap { size: usize, cap: usize },
    #[error("DP table of {cells} cells exceeds the cap of {cap}; use a larger epsilon")]
    DpTooLarge { cells: u128, cap: u128 },
    #[error("internal invariant violated: {0}")]
    Invariant(String),
    #[error("solve report: {0}")]
    Format(String),
    #[error("`{0}` is an online policy, not a static placement algorithm")]
    NotStatic(Algorithm),
}

impl SolverError {
    /// Whether the error is a deliberate refusal on instance size.
    pub fn is_refusal(&self) -> bool {
        matches!(
            self,
            SolverError::OracleCap { .. }
                | SolverError::DpTooLarge { .. }
                | SolverError::Library(LibraryError::EnumerationCap { .. })
        )
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Algorithm {
    Spec,
    Gen,
    Independent,
    Oracle,
    Lru,
    Lfu,
}

impl Algorithm {
    pub fn name(self) -> &'static str {
        match self {
            Algorithm::Spec => "spec",
            Algorithm::Gen => "gen",
            Algorithm::Independent => "independent",
            Algorithm::Oracle => "oracle",
            Algorithm::Lru => "lru",
            Algorithm::Lfu => "lfu",
        }
    }
}

impl fmt::Display for Algorithm {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Algorithm {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "spec" => Ok(Algorithm::Spec),
            "gen" => Ok(Algorithm::Gen),
            "independent" => Ok(Algorithm::Independent),
            "oracle" => Ok(Algorithm::Oracle),
            "lru" => Ok(Algorithm::Lru),
            "lfu" => Ok(Algorithm::Lfu),
            other => Err(format!("unknown algorithm `{other}`")),
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Diagnostics {
    /// Block combinations evaluated by the rounding DP.
    pub combinations: u64,
    pub dp_cells: u64,
    pub greedy_steps: u64,
    /// Largest cardinality of a feasible placement, when computed.
    pub gamma: Option<u64>,
    /// Complete placements scored by the exhaustive search.
    pub placements_scored: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ServerReport {
    pub server: String,
    pub models: Vec<String>,
    pub storage_bytes: u64,
    pub capacity_bytes: u64,
    /// Hits of this server not already served by lower-indexed servers.
    pub hit_mass: u64,
    pub hit_ratio: f64,
}

/// Outcome of one solve. The placement is the per-server model lists.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SolveReport {
    pub format: String,
    pub version: u32,
    pub algorithm: Algorithm,
    pub epsilon: Option<f64>,
    pub hit_ratio: f64,
    pub hit_mass: u64,
    pub total_mass: u64,
    pub runtime_s: f64,
    pub per_server: Vec<ServerReport>,
    pub diagnostics: Diagnostics,
}

impl SolveReport {
    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("report serializes");
        s.push('\n');
        s
    }

    pub fn from_json(text: &str) -> Result<Self, SolverError> {
        let r: SolveReport = serde_json::from_str(text).map_err(|e| SolverError::Format(e.to_string()))?;
        if r.format != REPORT_FORMAT || r.version != REPORT_FORMAT_VERSION {
            return Err(SolverError::Format(format!(
                "expected {REPORT_FORMAT} v{REPORT_FORMAT_VERSION}, found {} v{}",
                r.format, r.version
            )));
        }
        Ok(r)
    }

    /// Rebuilds the placement matrix from the per-server model ids.
    pub fn placement(&self, lib: &ModelLibrary, topo: &Topology) -> Result<Placement, SolverError> {
        if self.per_server.len() != topo.num_servers() {
            return Err(SolverError::Format(format!(
                "report lists {} servers, topology has {}",
                self.per_server.len(),
                topo.num_servers()
            )));
        }
        let mut x = Placement::empty(topo.num_servers(), lib.num_models());
        for (m, row) in self.per_server.iter().enumerate() {
            if row.server != topo.servers[m].id {
                return Err(SolverError::Format(format!(
                    "server {m} is `{}` in the report but `{}` in the topology",
                    row.server, topo.servers[m].id
                )));
            }
            for id in &row.models {
                x.set(m, lib.model_index(id)?, true);
            }
        }
        Ok(x)
    }
}

/// Runs a static placement algorithm by tag. `eps` is used by `spec` only.
pub fn solve(
    algorithm: Algorithm,
    lib: &ModelLibrary,
    topo: &Topology,
    wl: &crate::objective::Workload,
    eps: crate::objective::Epsilon,
) -> Result<Solution, SolverError> {
    match algorithm {
        Algorithm::Spec => solve_spec(lib, topo, wl, eps),
        Algorithm::Gen => solve_gen(lib, topo, wl),
        Algorithm::Independent => solve_independent(lib, topo, wl),
        Algorithm::Oracle => solve_exhaustive(lib, topo, wl),
        Algorithm::Lru | Algorithm::Lfu => Err(SolverError::NotStatic(algorithm)),
    }
}

/// A placement together with its report.
#[derive(Debug, Clone, PartialEq)]
pub struct Solution {
    pub placement: Placement,
    pub report: SolveReport,
}

/// Scores `x`, checks feasibility and assembles the report.
pub(crate) fn finish(
    algorithm: Algorithm,
    epsilon: Option<f64>,
    lib: &ModelLibrary,
    topo: &Topology,
    hm: &HitModel,
    x: Placement,
    diagnostics: Diagnostics,
    started: Instant,
) -> Result<Solution, SolverError> {
    if let Some(m) = capacity_violation(lib, topo, &x, Accounting::Shared) {
        return Err(SolverError::Invariant(format!("{algorithm} placement overfills server {m}")));
    }
    let hit_mass = hm.hit_mass(&x);
    let total_mass = hm.total_mass();
    let ratio = |mass: u64| if total_mass == 0 { 0.0 } else { mass as f64 / total_mass as f64 };
    let per_server = hm
        .per_server_breakdown(&x)
        .into_iter()
        .enumerate()
        .map(|(m, mass)| ServerReport {
            server: topo.servers[m].id.clone(),
            models: x.row(m).map(|i| lib.models()[i].id.clone()).collect(),
            storage_bytes: lib.storage_of(x.row(m)),
            capacity_bytes: topo.servers[m].capacity_bytes,
            hit_mass: mass,
            hit_ratio: ratio(mass),
        })
        .collect();
    let report = SolveReport {
        format: REPORT_FORMAT.into(),
        version: REPORT_FORMAT_VERSION,
        algorithm,
        epsilon,
        hit_ratio: ratio(hit_mass),
        hit_mass,
        total_mass,
        runtime_s: started.elapsed().as_secs_f64(),
        per_server,
        diagnostics,
    };
    Ok(Solution { placement: x, report })
}
