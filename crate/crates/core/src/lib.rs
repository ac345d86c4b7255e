//! Edge caching of AI models whose parameters are shared across models.

pub mod harness;
pub mod library;
pub mod network;
pub mod objective;
pub mod seed;
pub mod solvers;

pub use library::{BlockCombination, LibraryConfig, LibraryError, Model, ModelLibrary, ParameterBlock};
pub use network::{ChannelParams, NetworkError, RateTable, Topology, TopologyConfig};
pub use objective::{Epsilon, HitModel, ObjectiveError, Placement, Workload, PROB_SCALE};
pub use solvers::{solve, Algorithm, SolveReport, Solution, SolverError};
pub use harness::{ExperimentConfig, HarnessError, MetricRow};
