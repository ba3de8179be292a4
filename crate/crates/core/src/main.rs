use std::net::TcpListener;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

use ledgerbench::cluster::Cluster;
use ledgerbench::exec::contracts;
use ledgerbench::node::rpc::Server;
use ledgerbench::scenario::{
    self, AttackSpec, RunOptions, Scenario, ScenarioError, SummaryFile, SweepAxis,
};
use ledgerbench::workloads::WORKLOADS;

#[derive(Parser)]
#[command(
    name = "ledgerbench",
    version,
    about = "Simulated private-blockchain benchmark runner"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Clone)]
struct Common {
    /// Override the scenario's run seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Directory for summary.json, CSVs and the trace.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Pace the simulation to real time.
    #[arg(long)]
    wall_clock: bool,
    #[arg(long, short)]
    verbose: bool,
}

impl Common {
    fn options(&self) -> RunOptions {
        RunOptions {
            out: self.out.clone(),
            wall_clock: self.wall_clock,
            seed: self.seed,
        }
    }
}

#[derive(Subcommand)]
enum Command {
    /// Run one scenario (file path or bundled name).
    Run {
        scenario: String,
        #[command(flatten)]
        common: Common,
    },
    /// Run a scenario once per value of one parameter.
    Sweep {
        scenario: String,
        /// nodes, clients, rate, batch_size or difficulty; defaults to the scenario's sweep.
        #[arg(long)]
        axis: Option<SweepAxis>,
        #[arg(long, value_delimiter = ',')]
        values: Vec<f64>,
        #[command(flatten)]
        common: Common,
    },
    /// Run a scenario under a network partition and report fork growth.
    Attack {
        scenario: String,
        /// Partition start tick; defaults to the scenario's attack block.
        #[arg(long)]
        start: Option<u64>,
        #[arg(long)]
        duration: Option<u64>,
        #[command(flatten)]
        common: Common,
    },
    List {
        what: ListKind,
        /// For scenarios: list `*.json` in this directory instead of the bundled set.
        #[arg(long)]
        dir: Option<PathBuf>,
    },
    /// Shorthand for `list contracts`.
    ListContracts,
    /// Serve a scenario's cluster over line-delimited JSON on TCP.
    Serve {
        scenario: String,
        #[arg(long, default_value = "127.0.0.1:7545")]
        addr: String,
        #[command(flatten)]
        common: Common,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum ListKind {
    Contracts,
    Workloads,
    Scenarios,
}

fn print_summary(f: &SummaryFile) {
    let s = &f.summary;
    println!(
        "{} [{} x{} {}] seed {}",
        f.scenario, f.consensus, f.nodes, f.workload, f.seed
    );
    println!(
        "  throughput {:.1} tx/s  latency p50 {:.3}s p99 {:.3}s",
        s.throughput, s.latency_p50, s.latency_p99
    );
    println!(
        "  submitted {} ok {} failed {} rejected {} unconfirmed {} reverted {}",
        s.submitted, s.succeeded, s.failed, s.rejected, s.unconfirmed, s.reverted
    );
    println!(
        "  blocks {}/{} main (ratio {:.3})  {:.2} blocks/s  max queue {}",
        s.blocks_main, s.blocks_total, s.fork_ratio, s.blocks_per_second, s.max_queue
    );
    if let Some(a) = &s.aborted {
        println!("  aborted: {a}");
    }
}

fn fail(e: ScenarioError) -> ExitCode {
    eprintln!("error: {e}");
    ExitCode::from(if e.is_config() { 2 } else { 1 })
}

fn load(arg: &str) -> Result<Scenario, ScenarioError> {
    scenario::resolve(arg)
}

fn init_log(common: &Common) {
    let level = if common.verbose { "debug" } else { "warn" };
    let _ = env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level))
        .try_init();
}

fn run(cmd: Command) -> Result<(), ScenarioError> {
    match cmd {
        Command::Run { scenario, common } => {
            init_log(&common);
            let s = load(&scenario)?;
            let out = scenario::run(&s, &common.options())?;
            print_summary(&out.summary);
        }
        Command::Sweep {
            scenario,
            axis,
            values,
            common,
        } => {
            init_log(&common);
            let s = load(&scenario)?;
            let (axis, values) = match (axis, s.sweep.clone()) {
                (Some(a), _) if !values.is_empty() => (a, values),
                (None, Some(sw)) if values.is_empty() => (sw.axis, sw.values),
                (Some(a), Some(sw)) if sw.axis == a => (a, sw.values),
                _ => {
                    return Err(ScenarioError::Invalid(
                        "sweep needs --axis and --values, or a sweep block".into(),
                    ))
                }
            };
            println!("{}", scenario::SWEEP_COLUMNS);
            for (v, f) in scenario::sweep(&s, axis, &values, &common.options())? {
                let m = &f.summary;
                println!(
                    "{},{v},{:.3},{:.3},{:.3},{:.3},{},{},{},{:.3}",
                    axis.name(),
                    m.throughput,
                    m.latency_p50,
                    m.latency_p99,
                    m.fork_ratio,
                    m.blocks_total,
                    m.blocks_main,
                    m.unconfirmed,
                    m.blocks_per_second
                );
            }
        }
        Command::Attack {
            scenario,
            start,
            duration,
            common,
        } => {
            init_log(&common);
            let s = load(&scenario)?;
            let base = s.attack.clone();
            let spec = AttackSpec {
                start: start.or(base.as_ref().map(|a| a.start)).unwrap_or(100_000),
                duration: duration
                    .or(base.as_ref().map(|a| a.duration))
                    .unwrap_or(150_000),
                group_a: base.as_ref().and_then(|a| a.group_a.clone()),
                group_b: base.and_then(|a| a.group_b),
            };
            let (out, report) = scenario::attack(&s, &spec, &common.options())?;
            print_summary(&out.summary);
            println!(
                "  partition {}..{}: forked fraction in window {:.3} of {} blocks",
                report.partition_start,
                report.partition_end,
                report.window_fork_fraction,
                report.window_blocks
            );
            let last = report
                .delta_last_increase
                .map_or("never".to_string(), |t| t.to_string());
            println!(
                "  delta max {} final {}  last increase at tick {last}",
                report.delta_max, report.delta_final
            );
        }
        Command::List { what, dir } => match what {
            ListKind::Contracts => list_contracts(),
            ListKind::Workloads => WORKLOADS.iter().for_each(|w| println!("{w}")),
            ListKind::Scenarios => match dir {
                Some(d) => scenario::list_dir(&d)?.iter().for_each(|n| println!("{n}")),
                None => scenario::BUNDLED.iter().for_each(|(n, _)| println!("{n}")),
            },
        },
        Command::ListContracts => list_contracts(),
        Command::Serve {
            scenario,
            addr,
            common,
        } => {
            init_log(&common);
            let s = load(&scenario)?;
            let cluster = Cluster::new(s.cluster_config(common.seed.unwrap_or(s.run.seed)))
                .map_err(|e| ScenarioError::Invalid(e.to_string()))?;
            let listener = TcpListener::bind(&addr)
                .map_err(|e| ScenarioError::Run(format!("bind {addr}: {e}")))?;
            eprintln!("listening on {addr}");
            Server::new(cluster, common.wall_clock)
                .serve(listener)
                .map_err(|e| ScenarioError::Run(e.to_string()))?;
        }
    }
    Ok(())
}

fn list_contracts() {
    for c in contracts::catalog() {
        println!("{}", serde_json::to_string(&c).expect("catalog serializes"));
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => fail(e),
    }
}
