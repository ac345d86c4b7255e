//! `pscache`: generate instances, solve placements and run experiments.

mod manifest;

use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{anyhow, bail, Context, Result};
use clap::{Args, Parser, Subcommand};

use pscache_core::harness::{
    generate_workload, run_mobility, run_online, run_perturbation, run_sweep_with, write_csv, ExperimentConfig,
    DEGRADATION_SCHEMA, METRICS_SCHEMA, PERTURBATION_SCHEMA, SERIES_SCHEMA, STEADY_SCHEMA,
};
use pscache_core::network::generate_topology;
use pscache_core::objective::{capacity_violation, Accounting};
use pscache_core::{
    solve, Algorithm, Epsilon, HitModel, ModelLibrary, SolveReport, SolverError, Topology, Workload,
};

use manifest::{sidecar, RunManifest};

/// Directory for experiment outputs when `--out-dir` is not given.
const OUTPUT_DIR_ENV: &str = "PSCACHE_OUTPUT_DIR";

#[derive(Parser)]
#[command(name = "pscache", version, about = "Parameter-sharing AI model placement on wireless edge servers")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Write a library, topology or workload file.
    #[command(subcommand)]
    Gen(GenKind),
    /// Place models with one algorithm and write a solve report.
    Solve(SolveArgs),
    /// Re-check a solve report against its inputs.
    Verify(VerifyArgs),
    /// Hit ratio over the capacity, server and user axes.
    Sweep(HarnessArgs),
    /// Hit ratio of fixed placements while users move.
    Mobility(HarnessArgs),
    /// Static placements against LRU and LFU caching.
    Online(HarnessArgs),
    /// Hit ratio when placing from misestimated probabilities.
    Perturb(HarnessArgs),
    /// Re-run the command recorded in a manifest and compare outputs.
    Replay {
        manifest: PathBuf,
    },
}

/// Experiment config file plus the flags that override it.
#[derive(Args, Clone)]
struct ConfigArgs {
    /// Experiment config (TOML). Defaults apply when omitted.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Master seed; overrides `seed` in the config.
    #[arg(long)]
    seed: Option<u64>,
}

#[derive(Subcommand)]
enum GenKind {
    /// Library from the config's `[library]` section.
    Library {
        #[command(flatten)]
        cfg: ConfigArgs,
        #[arg(long)]
        out: PathBuf,
    },
    /// Topology for one replicate of the sweep base point.
    Topology {
        #[command(flatten)]
        cfg: ConfigArgs,
        #[arg(long)]
        servers: Option<usize>,
        #[arg(long)]
        users: Option<usize>,
        #[arg(long)]
        capacity_gb: Option<f64>,
        #[arg(long, default_value_t = 0)]
        replicate: usize,
        #[arg(long)]
        out: PathBuf,
    },
    /// Workload for one replicate of the sweep base point.
    Workload {
        #[command(flatten)]
        cfg: ConfigArgs,
        /// Library file; generated from the config when omitted.
        #[arg(long)]
        library: Option<PathBuf>,
        #[arg(long)]
        users: Option<usize>,
        #[arg(long, default_value_t = 0)]
        replicate: usize,
        #[arg(long)]
        out: PathBuf,
    },
}

#[derive(Args)]
struct Inputs {
    #[arg(long)]
    library: PathBuf,
    #[arg(long)]
    topology: PathBuf,
    #[arg(long)]
    workload: PathBuf,
}

#[derive(Args)]
struct SolveArgs {
    /// spec, gen, independent or oracle.
    algorithm: Algorithm,
    #[command(flatten)]
    inputs: Inputs,
    /// Rounding parameter of `spec`.
    #[arg(long, default_value_t = 0.1)]
    epsilon: f64,
    /// Record wall-clock runtime in the report (makes output non-reproducible).
    #[arg(long)]
    timing: bool,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct VerifyArgs {
    #[command(flatten)]
    inputs: Inputs,
    #[arg(long)]
    report: PathBuf,
}

#[derive(Args)]
struct HarnessArgs {
    #[command(flatten)]
    cfg: ConfigArgs,
    /// Worker threads for replicates.
    #[arg(long)]
    jobs: Option<usize>,
    #[arg(long)]
    replicates: Option<usize>,
    /// Output directory; falls back to $PSCACHE_OUTPUT_DIR, then `results`.
    #[arg(long)]
    out_dir: Option<PathBuf>,
}

/// Report does not match its inputs, or output differs on replay.
#[derive(Debug)]
struct Mismatch(String);

impl std::fmt::Display for Mismatch {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for Mismatch {}

fn exit_code(err: &anyhow::Error) -> u8 {
    for cause in err.chain() {
        if cause.downcast_ref::<Mismatch>().is_some() {
            return 4;
        }
        if let Some(e) = cause.downcast_ref::<SolverError>() {
            if e.is_refusal() {
                return 3;
            }
            if matches!(e, SolverError::Invariant(_)) {
                return 4;
            }
        }
    }
    2
}

fn main() -> ExitCode {
    let args: Vec<String> = std::env::args().skip(1).collect();
    let cli = Cli::parse();
    match run(cli, args) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(exit_code(&e))
        }
    }
}

fn run(cli: Cli, args: Vec<String>) -> Result<()> {
    match cli.command {
        Command::Gen(kind) => gen(kind, args),
        Command::Solve(a) => cmd_solve(a, args),
        Command::Verify(a) => cmd_verify(a),
        Command::Sweep(a) => cmd_harness("sweep", a, args),
        Command::Mobility(a) => cmd_harness("mobility", a, args),
        Command::Online(a) => cmd_harness("online", a, args),
        Command::Perturb(a) => cmd_harness("perturb", a, args),
        Command::Replay { manifest } => cmd_replay(&manifest),
    }
}

// ------------------------------------------------------------------ config

/// Precedence, lowest first: built-in defaults, the config file, flags.
fn load_config(
    args: &ConfigArgs,
    overrides: &[(&str, Option<toml::Value>)],
    manifest: &mut RunManifest,
) -> Result<ExperimentConfig> {
    let mut table = match &args.config {
        Some(path) => {
            manifest.input(path)?;
            let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
            text.parse::<toml::Table>().with_context(|| format!("parsing {}", path.display()))?
        }
        None => toml::Table::new(),
    };
    if let Some(seed) = args.seed {
        table.insert("seed".into(), toml::Value::Integer(seed_to_toml(seed)?));
    }
    for (key, value) in overrides {
        if let Some(v) = value {
            table.insert((*key).into(), v.clone());
        }
    }
    if !table.contains_key("seed") {
        bail!("no master seed: set `seed` in the config or pass --seed");
    }
    let cfg = ExperimentConfig::from_toml(&table.to_string())?;
    manifest.seed = Some(cfg.seed);
    manifest.config = cfg.to_toml();
    Ok(cfg)
}

fn seed_to_toml(seed: u64) -> Result<i64> {
    i64::try_from(seed).map_err(|_| anyhow!("seed {seed} does not fit a TOML integer (max {})", i64::MAX))
}

fn int(v: Option<usize>) -> Option<toml::Value> {
    v.map(|n| toml::Value::Integer(n as i64))
}

fn write_text(path: &Path, text: &str) -> Result<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    }
    fs::write(path, text).with_context(|| format!("writing {}", path.display()))
}

fn read_text(path: &Path) -> Result<String> {
    fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))
}

fn read_library(path: &Path) -> Result<ModelLibrary> {
    ModelLibrary::from_json(&read_text(path)?).with_context(|| format!("library {}", path.display()))
}

fn read_inputs(inputs: &Inputs) -> Result<(ModelLibrary, Topology, Workload)> {
    let lib = read_library(&inputs.library)?;
    let topo = Topology::from_json(&read_text(&inputs.topology)?)
        .with_context(|| format!("topology {}", inputs.topology.display()))?;
    let wl = Workload::from_json(&read_text(&inputs.workload)?)
        .with_context(|| format!("workload {}", inputs.workload.display()))?;
    Ok((lib, topo, wl))
}

// --------------------------------------------------------------- commands

fn gen(kind: GenKind, args: Vec<String>) -> Result<()> {
    let mut manifest = RunManifest::new(args, None, String::new());
    let out = match kind {
        GenKind::Library { cfg, out } => {
            let cfg = load_config(&cfg, &[], &mut manifest)?;
            write_text(&out, &cfg.build_library()?.to_json())?;
            out
        }
        GenKind::Topology {
            cfg,
            servers,
            users,
            capacity_gb,
            replicate,
            out,
        } => {
            let mut cfg = load_config(&cfg, &[], &mut manifest)?;
            let base = &mut cfg.sweep.base;
            base.servers = servers.unwrap_or(base.servers);
            base.users = users.unwrap_or(base.users);
            base.capacity_gb = capacity_gb.unwrap_or(base.capacity_gb);
            cfg.validate()?;
            let topo = generate_topology(&cfg.topology_config(&cfg.sweep.base), cfg.replicate_seed(replicate))?;
            manifest.config = cfg.to_toml();
            write_text(&out, &topo.to_json())?;
            out
        }
        GenKind::Workload {
            cfg,
            library,
            users,
            replicate,
            out,
        } => {
            let mut cfg = load_config(&cfg, &[], &mut manifest)?;
            let lib = match &library {
                Some(path) => {
                    manifest.input(path)?;
                    read_library(path)?
                }
                None => cfg.build_library()?,
            };
            cfg.sweep.base.users = users.unwrap_or(cfg.sweep.base.users);
            cfg.validate()?;
            let wl = generate_workload(&cfg.workload, cfg.sweep.base.users, &lib, cfg.replicate_seed(replicate))?;
            manifest.config = cfg.to_toml();
            write_text(&out, &wl.to_json())?;
            out
        }
    };
    manifest.output(&out)?;
    manifest.write(&sidecar(&out))
}

fn cmd_solve(a: SolveArgs, args: Vec<String>) -> Result<()> {
    if matches!(a.algorithm, Algorithm::Lru | Algorithm::Lfu) {
        bail!("`{}` is an online policy; use `pscache online`", a.algorithm);
    }
    let eps = Epsilon::new(a.epsilon)?;
    let mut manifest = RunManifest::new(
        args,
        None,
        format!("algorithm = \"{}\"\nepsilon = {}\ntiming = {}\n", a.algorithm, a.epsilon, a.timing),
    );
    for p in [&a.inputs.library, &a.inputs.topology, &a.inputs.workload] {
        manifest.input(p)?;
    }
    let (lib, topo, wl) = read_inputs(&a.inputs)?;
    let mut sol = solve(a.algorithm, &lib, &topo, &wl, eps)?;
    if !a.timing {
        sol.report.runtime_s = 0.0;
    }
    println!(
        "solved {} hit_ratio {:.6} models_placed {}",
        a.algorithm,
        sol.report.hit_ratio,
        sol.placement.count()
    );
    write_text(&a.out, &sol.report.to_json())?;
    manifest.output(&a.out)?;
    manifest.write(&sidecar(&a.out))
}

fn cmd_verify(a: VerifyArgs) -> Result<()> {
    let (lib, topo, wl) = read_inputs(&a.inputs)?;
    let report = SolveReport::from_json(&read_text(&a.report)?)
        .with_context(|| format!("report {}", a.report.display()))?;
    let x = report.placement(&lib, &topo)?;
    if let Some(m) = capacity_violation(&lib, &topo, &x, Accounting::Shared) {
        return Err(Mismatch(format!("server {} exceeds its capacity", topo.servers[m].id)).into());
    }
    let hm = HitModel::new(&lib, &topo, &wl)?;
    let mass = hm.hit_mass(&x);
    let mut problems = Vec::new();
    if mass != report.hit_mass {
        problems.push(format!("hit mass {mass}, report says {}", report.hit_mass));
    }
    if hm.total_mass() != report.total_mass {
        problems.push(format!("total mass {}, report says {}", hm.total_mass(), report.total_mass));
    }
    let ratio = hm.ratio(mass)?;
    if ratio != report.hit_ratio {
        problems.push(format!("hit ratio {ratio}, report says {}", report.hit_ratio));
    }
    for (m, (row, hits)) in report.per_server.iter().zip(hm.per_server_breakdown(&x)).enumerate() {
        let storage = lib.storage_of(x.row(m));
        if row.hit_mass != hits || row.storage_bytes != storage {
            problems.push(format!(
                "server {}: hits {hits} / storage {storage}, report says {} / {}",
                row.server, row.hit_mass, row.storage_bytes
            ));
        }
    }
    if !problems.is_empty() {
        return Err(Mismatch(problems.join("; ")).into());
    }
    println!("verified {} hit_ratio {ratio:.6} feasible", report.algorithm);
    Ok(())
}

fn cmd_harness(which: &str, a: HarnessArgs, args: Vec<String>) -> Result<()> {
    let mut manifest = RunManifest::new(args, None, String::new());
    let cfg = load_config(
        &a.cfg,
        &[("jobs", int(a.jobs)), ("replicates", int(a.replicates))],
        &mut manifest,
    )?;
    let dir = a
        .out_dir
        .or_else(|| std::env::var_os(OUTPUT_DIR_ENV).map(PathBuf::from))
        .unwrap_or_else(|| PathBuf::from("results"));
    fs::create_dir_all(&dir).with_context(|| format!("creating {}", dir.display()))?;
    println!("start {which} seed {} replicates {}", cfg.seed, cfg.replicates);

    let mut outputs = Vec::new();
    let mut emit = |name: &str, bytes: Vec<u8>| -> Result<()> {
        let path = dir.join(name);
        fs::write(&path, bytes).with_context(|| format!("writing {}", path.display()))?;
        outputs.push(path);
        Ok(())
    };
    fn to_csv<T: serde::Serialize>(schema: &str, rows: &[T]) -> Result<Vec<u8>> {
        let mut out = Vec::new();
        write_csv(&mut out, schema, rows)?;
        Ok(out)
    }
    match which {
        "sweep" => {
            let rows = run_sweep_with(&cfg, &|done, total| println!("progress sweep {done}/{total}"))?;
            emit("metrics.csv", to_csv(METRICS_SCHEMA, &rows)?)?;
        }
        "mobility" => {
            let res = run_mobility(&cfg)?;
            for d in &res.degradation {
                println!("degradation {} {:.6}", d.algorithm, d.relative);
            }
            emit("mobility_series.csv", to_csv(SERIES_SCHEMA, &res.series)?)?;
            emit("mobility_degradation.csv", to_csv(DEGRADATION_SCHEMA, &res.degradation)?)?;
        }
        "online" => {
            let res = run_online(&cfg)?;
            emit("online_series.csv", to_csv(SERIES_SCHEMA, &res.series)?)?;
            emit("online_steady.csv", to_csv(STEADY_SCHEMA, &res.steady)?)?;
        }
        "perturb" => {
            let rows = run_perturbation(&cfg)?;
            emit("perturbation.csv", to_csv(PERTURBATION_SCHEMA, &rows)?)?;
        }
        other => unreachable!("unknown harness command {other}"),
    }
    for path in &outputs {
        manifest.output(path)?;
    }
    manifest.write(&dir.join(format!("{which}.manifest.json")))
}

fn cmd_replay(path: &Path) -> Result<()> {
    let recorded = RunManifest::read(path)?;
    for input in &recorded.inputs {
        let now = manifest::sha256_file(&input.path)?;
        if now != input.sha256 {
            bail!("input {} changed since the recorded run", input.path.display());
        }
    }
    let argv = std::iter::once("pscache".to_string()).chain(recorded.command.iter().cloned());
    let cli = Cli::try_parse_from(argv).context("recorded command no longer parses")?;
    if matches!(cli.command, Command::Replay { .. } | Command::Verify(_)) {
        bail!("manifest records a command that writes no outputs");
    }
    run(cli, recorded.command.clone())?;
    let mut differing = Vec::new();
    for out in &recorded.outputs {
        if manifest::sha256_file(&out.path)? != out.sha256 {
            differing.push(out.path.display().to_string());
        }
    }
    if !differing.is_empty() {
        return Err(Mismatch(format!("replay changed {}", differing.join(", "))).into());
    }
    println!("replayed {} outputs identical", recorded.outputs.len());
    Ok(())
}
