//! Fixtures shared by the solver benchmarks.

use pscache_core::harness::{generate_workload, AxisPoint};
use pscache_core::network::generate_topology;
use pscache_core::{ExperimentConfig, ModelLibrary, Topology, Workload};

pub struct Instance {
    pub lib: ModelLibrary,
    pub topo: Topology,
    pub wl: Workload,
}

/// A default-config instance with `models_per_root` models per backbone.
pub fn instance(seed: u64, models_per_root: usize, servers: usize, users: usize) -> Instance {
    let mut cfg = ExperimentConfig::with_seed(seed);
    cfg.library.models_per_root = Some(models_per_root);
    let point = AxisPoint {
        servers,
        users,
        ..cfg.sweep.base
    };
    let lib = cfg.build_library().expect("library");
    let topo = generate_topology(&cfg.topology_config(&point), seed).expect("topology");
    let wl = generate_workload(&cfg.workload, users, &lib, seed).expect("workload");
    Instance { lib, topo, wl }
}
