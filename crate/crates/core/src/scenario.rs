//! Declarative experiment files: topology, faults, workload and run
//! parameters, plus the runners behind the CLI commands.

use std::collections::BTreeSet;
use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::chain::{BlockTree, ForkRule};
use crate::cluster::{Cluster, ClusterConfig};
use crate::consensus::ConsensusConfig;
use crate::driver::metrics::{write_blocks_csv, write_queue_csv, write_txs_csv};
use crate::driver::{self, compute_metrics, MetricsRecord, RunConfig, Summary};
use crate::netsim::{FabricStats, FaultPolicy, NetConfig, NodeId, Partition, TraceRecorder};
use crate::node::NodeConfig;
use crate::workloads::{self, WorkloadSpec};

#[derive(Debug, Error)]
pub enum ScenarioError {
    #[error("reading {path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("parsing scenario: {0}")]
    Parse(#[from] serde_json::Error),
    #[error("invalid scenario: {0}")]
    Invalid(String),
    #[error("run failed: {0}")]
    Run(String),
}

impl ScenarioError {
    /// Problems with the inputs, as opposed to failures during a run.
    pub fn is_config(&self) -> bool {
        !matches!(self, ScenarioError::Run(_))
    }
}

fn default_nodes() -> usize {
    8
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Scenario {
    pub name: String,
    #[serde(default)]
    pub description: String,
    #[serde(default = "default_nodes")]
    pub nodes: usize,
    #[serde(default)]
    pub consensus: ConsensusConfig,
    #[serde(default)]
    pub node: NodeConfig,
    #[serde(default)]
    pub network: NetConfig,
    #[serde(default)]
    pub faults: FaultPolicy,
    #[serde(default)]
    pub workload: WorkloadSpec,
    #[serde(default)]
    pub run: RunConfig,
    #[serde(default)]
    pub attack: Option<AttackSpec>,
    #[serde(default)]
    pub sweep: Option<SweepSpec>,
}

/// Partition injected by the attack command. Groups default to the lower
/// and upper halves of the node ids.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AttackSpec {
    pub start: u64,
    pub duration: u64,
    #[serde(default)]
    pub group_a: Option<BTreeSet<NodeId>>,
    #[serde(default)]
    pub group_b: Option<BTreeSet<NodeId>>,
}

impl AttackSpec {
    pub fn groups(&self, nodes: usize) -> (BTreeSet<NodeId>, BTreeSet<NodeId>) {
        let half = nodes / 2;
        let a = self.group_a.clone().unwrap_or_else(|| (0..half).collect());
        let b = self
            .group_b
            .clone()
            .unwrap_or_else(|| (0..nodes).filter(|n| !a.contains(n)).collect());
        (a, b)
    }

    pub fn heal(&self) -> u64 {
        self.start + self.duration
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SweepAxis {
    Nodes,
    Clients,
    Rate,
    BatchSize,
    Difficulty,
}

impl SweepAxis {
    pub fn name(&self) -> &'static str {
        match self {
            SweepAxis::Nodes => "nodes",
            SweepAxis::Clients => "clients",
            SweepAxis::Rate => "rate",
            SweepAxis::BatchSize => "batch_size",
            SweepAxis::Difficulty => "difficulty",
        }
    }
}

impl std::str::FromStr for SweepAxis {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        serde_json::from_value(serde_json::Value::String(s.into())).map_err(|_| {
            format!(
                "unknown sweep axis {s:?}; expected nodes, clients, rate, batch_size or difficulty"
            )
        })
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepSpec {
    pub axis: SweepAxis,
    pub values: Vec<f64>,
}

impl Scenario {
    pub fn from_json(text: &str) -> Result<Self, ScenarioError> {
        let s: Scenario = serde_json::from_str(text)?;
        s.validate()?;
        Ok(s)
    }

    pub fn load(path: &Path) -> Result<Self, ScenarioError> {
        let text = fs::read_to_string(path).map_err(|source| ScenarioError::Io {
            path: path.to_path_buf(),
            source,
        })?;
        Self::from_json(&text)
    }

    pub fn validate(&self) -> Result<(), ScenarioError> {
        let invalid = |e: &dyn std::fmt::Display| ScenarioError::Invalid(e.to_string());
        if self.nodes == 0 {
            return Err(ScenarioError::Invalid("nodes must be positive".into()));
        }
        self.consensus
            .validate(self.nodes)
            .map_err(|e| invalid(&e))?;
        self.faults.validate(self.nodes).map_err(|e| invalid(&e))?;
        self.run.validate().map_err(|e| invalid(&e))?;
        workloads::build(&self.workload).map_err(|e| invalid(&e))?;
        if !(0.0..=1.0).contains(&self.node.gossip_p) {
            return Err(ScenarioError::Invalid(
                "node.gossip_p must be within [0, 1]".into(),
            ));
        }
        if let Some(a) = &self.attack {
            let (ga, gb) = a.groups(self.nodes);
            if ga.iter().chain(&gb).any(|n| *n >= self.nodes)
                || ga.intersection(&gb).next().is_some()
            {
                return Err(ScenarioError::Invalid(
                    "attack groups must be disjoint node ids".into(),
                ));
            }
        }
        Ok(())
    }

    /// Cluster wiring for this scenario, without the attack partition.
    pub fn cluster_config(&self, seed: u64) -> ClusterConfig {
        ClusterConfig {
            nodes: self.nodes,
            consensus: self.consensus.clone(),
            node: self.node.clone(),
            network: self.network.clone(),
            faults: self.faults.clone(),
            seed,
        }
    }

    /// Copy with one sweep axis set to `value`.
    pub fn with_axis(&self, axis: SweepAxis, value: f64) -> Scenario {
        let mut s = self.clone();
        let n = value.round().max(0.0) as u64;
        match axis {
            SweepAxis::Nodes => s.nodes = n as usize,
            SweepAxis::Clients => s.run.clients = n as usize,
            SweepAxis::Rate => s.run.rate = value,
            SweepAxis::BatchSize => s.consensus.batch_size = n as usize,
            SweepAxis::Difficulty => s.consensus.difficulty = n,
        }
        s.sweep = None;
        s
    }
}

#[derive(Clone, Debug, Default)]
pub struct RunOptions {
    pub out: Option<PathBuf>,
    pub wall_clock: bool,
    pub seed: Option<u64>,
}

/// Everything written to `summary.json`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SummaryFile {
    pub scenario: String,
    pub consensus: String,
    pub nodes: usize,
    pub workload: String,
    pub seed: u64,
    #[serde(flatten)]
    pub summary: Summary,
    pub network: FabricStats,
    pub trace_events: u64,
    pub trace_digest: String,
}

pub struct Outcome {
    pub summary: SummaryFile,
    pub record: MetricsRecord,
    pub cluster: Cluster,
}

fn io_err(path: &Path) -> impl Fn(std::io::Error) -> ScenarioError + '_ {
    move |source| ScenarioError::Io {
        path: path.to_path_buf(),
        source,
    }
}

fn create(dir: &Path, name: &str) -> Result<BufWriter<File>, ScenarioError> {
    let p = dir.join(name);
    File::create(&p).map(BufWriter::new).map_err(io_err(&p))
}

/// Run with the partition from `attack` (if any) added to the fault policy.
pub fn run(scenario: &Scenario, opts: &RunOptions) -> Result<Outcome, ScenarioError> {
    scenario.validate()?;
    let mut run_cfg = scenario.run.clone();
    if let Some(seed) = opts.seed {
        run_cfg.seed = seed;
    }
    let mut cfg = scenario.cluster_config(run_cfg.seed);
    if let Some(a) = &scenario.attack {
        let (group_a, group_b) = a.groups(scenario.nodes);
        cfg.faults.partitions.push(Partition {
            group_a,
            group_b,
            start: a.start,
            duration: a.duration,
        });
    }
    let mut cluster = Cluster::new(cfg).map_err(|e| ScenarioError::Invalid(e.to_string()))?;
    if let Some(dir) = &opts.out {
        fs::create_dir_all(dir).map_err(io_err(dir))?;
        let sink = create(dir, "trace.jsonl")?;
        cluster.set_trace(TraceRecorder::with_sink(Box::new(sink)));
    }
    cluster.set_wall_clock(opts.wall_clock);

    let workload =
        workloads::build(&scenario.workload).map_err(|e| ScenarioError::Invalid(e.to_string()))?;
    let contract = driver::prepare(&mut cluster, workload.as_ref(), &run_cfg)
        .map_err(|e| ScenarioError::Run(e.to_string()))?;
    let record = driver::run_benchmark(&run_cfg, &mut cluster, workload.as_ref(), contract);
    let summary = compute_metrics(&record);
    let _ = cluster.fabric_mut().trace_mut().flush();
    let trace = cluster.fabric().trace();
    let file = SummaryFile {
        scenario: scenario.name.clone(),
        consensus: scenario.consensus.kind.name().into(),
        nodes: scenario.nodes,
        workload: scenario.workload.name.clone(),
        seed: run_cfg.seed,
        summary,
        network: cluster.fabric().stats(),
        trace_events: trace.count(),
        trace_digest: trace.digest().to_hex(),
    };
    if let Some(dir) = &opts.out {
        write_outputs(dir, &file, &record)?;
    }
    Ok(Outcome {
        summary: file,
        record,
        cluster,
    })
}

fn write_outputs(
    dir: &Path,
    summary: &SummaryFile,
    record: &MetricsRecord,
) -> Result<(), ScenarioError> {
    let p = dir.join("summary.json");
    let mut text = serde_json::to_string_pretty(summary)?;
    text.push('\n');
    fs::write(&p, text).map_err(io_err(&p))?;
    let p = dir.join("txs.csv");
    write_txs_csv(record, create(dir, "txs.csv")?).map_err(io_err(&p))?;
    let p = dir.join("queue.csv");
    write_queue_csv(record, create(dir, "queue.csv")?).map_err(io_err(&p))?;
    let p = dir.join("blocks.csv");
    write_blocks_csv(record, create(dir, "blocks.csv")?).map_err(io_err(&p))?;
    Ok(())
}

/// Fork exposure of a partition run.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SecurityReport {
    pub partition_start: u64,
    pub partition_end: u64,
    /// Blocks produced inside the window that ended up off the main branch,
    /// over all blocks produced inside it.
    pub window_fork_fraction: f64,
    pub window_blocks: u64,
    pub delta_max: u64,
    pub delta_final: u64,
    /// Last sample tick at which the off-main count grew.
    pub delta_last_increase: Option<u64>,
    pub fork_ratio: f64,
    /// Block commits observed after the heal, by the observing client.
    pub first_commit_after_heal: Option<u64>,
    /// (tick, total, main, delta) per poll.
    pub series: Vec<(u64, u64, u64, u64)>,
}

/// Off-main fraction among blocks stamped inside `[start, end)`.
pub fn window_fork_fraction(tree: &BlockTree, rule: ForkRule, start: u64, end: u64) -> (f64, u64) {
    let main: BTreeSet<_> = tree.branch(&tree.fork_choice(rule)).into_iter().collect();
    let (mut total, mut off) = (0u64, 0u64);
    for (id, b) in tree.iter() {
        if b.height() == 0 || b.header.timestamp < start || b.header.timestamp >= end {
            continue;
        }
        total += 1;
        if !main.contains(id) {
            off += 1;
        }
    }
    let f = if total == 0 {
        0.0
    } else {
        off as f64 / total as f64
    };
    (f, total)
}

pub fn security_report(outcome: &Outcome, attack: &AttackSpec, rule: ForkRule) -> SecurityReport {
    let tree = outcome.cluster.global_tree();
    let (window_fork_fraction, window_blocks) =
        window_fork_fraction(tree, rule, attack.start, attack.heal());
    let mut last_increase = None;
    let mut prev = None;
    let mut series = Vec::with_capacity(outcome.record.blocks.len());
    let mut first_commit_after_heal = None;
    let mut prev_height = None;
    for s in &outcome.record.blocks {
        let d = s.gap.delta();
        if prev.is_some_and(|p| d > p) {
            last_increase = Some(s.tick);
        }
        prev = Some(d);
        if s.tick >= attack.heal()
            && first_commit_after_heal.is_none()
            && prev_height.is_some_and(|h| s.height > h)
        {
            first_commit_after_heal = Some(s.tick);
        }
        if s.tick >= attack.heal() {
            prev_height.get_or_insert(s.height);
        }
        series.push((s.tick, s.gap.total_blocks, s.gap.main_branch_blocks, d));
    }
    let gap = outcome.cluster.fork_gap();
    SecurityReport {
        partition_start: attack.start,
        partition_end: attack.heal(),
        window_fork_fraction,
        window_blocks,
        delta_max: series.iter().map(|s| s.3).max().unwrap_or(0),
        delta_final: gap.delta(),
        delta_last_increase: last_increase,
        fork_ratio: gap.ratio,
        first_commit_after_heal,
        series,
    }
}

pub fn attack(
    scenario: &Scenario,
    spec: &AttackSpec,
    opts: &RunOptions,
) -> Result<(Outcome, SecurityReport), ScenarioError> {
    let mut s = scenario.clone();
    s.attack = Some(spec.clone());
    let outcome = run(&s, opts)?;
    let report = security_report(&outcome, spec, s.consensus.fork_rule);
    if let Some(dir) = &opts.out {
        let p = dir.join("attack.json");
        let mut text = serde_json::to_string_pretty(&report)?;
        text.push('\n');
        fs::write(&p, text).map_err(io_err(&p))?;
    }
    Ok((outcome, report))
}

pub const SWEEP_COLUMNS: &str =
    "axis,value,throughput,latency_p50,latency_p99,fork_ratio,blocks_total,blocks_main,unconfirmed,blocks_per_second";

/// One run per value; per-value outputs go to `<out>/<axis>-<value>/` and a
/// combined `sweep.csv` to `<out>`.
pub fn sweep(
    scenario: &Scenario,
    axis: SweepAxis,
    values: &[f64],
    opts: &RunOptions,
) -> Result<Vec<(f64, SummaryFile)>, ScenarioError> {
    if values.is_empty() {
        return Err(ScenarioError::Invalid(
            "sweep needs at least one value".into(),
        ));
    }
    let mut out = Vec::with_capacity(values.len());
    for &v in values {
        let s = scenario.with_axis(axis, v);
        s.validate()?;
        let sub = RunOptions {
            out: opts
                .out
                .as_ref()
                .map(|d| d.join(format!("{}-{v}", axis.name()))),
            ..opts.clone()
        };
        out.push((v, run(&s, &sub)?.summary));
    }
    if let Some(dir) = &opts.out {
        fs::create_dir_all(dir).map_err(io_err(dir))?;
        let p = dir.join("sweep.csv");
        let mut w = create(dir, "sweep.csv")?;
        let mut rows = || -> std::io::Result<()> {
            writeln!(w, "{SWEEP_COLUMNS}")?;
            for (v, f) in &out {
                let s = &f.summary;
                writeln!(
                    w,
                    "{},{v},{:.6},{:.6},{:.6},{:.6},{},{},{},{:.6}",
                    axis.name(),
                    s.throughput,
                    s.latency_p50,
                    s.latency_p99,
                    s.fork_ratio,
                    s.blocks_total,
                    s.blocks_main,
                    s.unconfirmed,
                    s.blocks_per_second
                )?;
            }
            w.flush()
        };
        rows().map_err(io_err(&p))?;
    }
    Ok(out)
}

/// Scenario files shipped with the crate, by name.
pub const BUNDLED: &[(&str, &str)] = &[
    (
        "blocksize_pbft",
        include_str!("../scenarios/blocksize_pbft.json"),
    ),
    ("crash_pbft", include_str!("../scenarios/crash_pbft.json")),
    (
        "partition_pow",
        include_str!("../scenarios/partition_pow.json"),
    ),
    (
        "peak_pbft_8x8",
        include_str!("../scenarios/peak_pbft_8x8.json"),
    ),
    ("queue_pbft", include_str!("../scenarios/queue_pbft.json")),
    (
        "scalability_pbft",
        include_str!("../scenarios/scalability_pbft.json"),
    ),
];

pub fn bundled(name: &str) -> Option<Result<Scenario, ScenarioError>> {
    let name = name.strip_suffix(".json").unwrap_or(name);
    BUNDLED
        .iter()
        .find(|(n, _)| *n == name)
        .map(|(_, text)| Scenario::from_json(text))
}

/// Load from a path, falling back to a bundled scenario of that name.
pub fn resolve(arg: &str) -> Result<Scenario, ScenarioError> {
    let path = Path::new(arg);
    if path.exists() {
        return Scenario::load(path);
    }
    bundled(arg).unwrap_or_else(|| {
        Err(ScenarioError::Io {
            path: path.to_path_buf(),
            source: std::io::Error::new(
                std::io::ErrorKind::NotFound,
                "no such file or bundled scenario",
            ),
        })
    })
}

/// Names of `*.json` files in `dir`, sorted.
pub fn list_dir(dir: &Path) -> Result<Vec<String>, ScenarioError> {
    let mut names = Vec::new();
    for entry in fs::read_dir(dir).map_err(io_err(dir))? {
        let p = entry.map_err(io_err(dir))?.path();
        if p.extension().is_some_and(|e| e == "json") {
            if let Some(stem) = p.file_stem() {
                names.push(stem.to_string_lossy().into_owned());
            }
        }
    }
    names.sort();
    Ok(names)
}
