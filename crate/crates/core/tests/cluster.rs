use ledgerbench::chain::ForkRule;
use ledgerbench::cluster::{Cluster, ClusterConfig};
use ledgerbench::consensus::{ConsensusConfig, ConsensusKind};
use ledgerbench::driver::{self, compute_metrics, BlockchainConnector, RunConfig};
use ledgerbench::netsim::{FaultPolicy, NetConfig};
use ledgerbench::node::{BlockRef, NodeConfig};
use ledgerbench::workloads::{self, WorkloadSpec};

fn consensus(kind: ConsensusKind) -> ConsensusConfig {
    ConsensusConfig {
        kind,
        difficulty: 4000,
        attempts_per_tick: 1,
        mine_window: 100,
        step_duration: 1000,
        ..Default::default()
    }
}

fn cluster(nodes: usize, kind: ConsensusKind, seed: u64) -> Cluster {
    Cluster::new(ClusterConfig {
        nodes,
        consensus: consensus(kind),
        node: NodeConfig::default(),
        network: NetConfig::default(),
        faults: FaultPolicy::default(),
        seed,
    })
    .unwrap()
}

fn run(c: &mut Cluster, workload: &str, rate: f64, duration: u64) -> driver::Summary {
    let w = workloads::build(&WorkloadSpec {
        name: workload.into(),
        params: serde_json::Value::Null,
    })
    .unwrap();
    let cfg = RunConfig {
        clients: 4,
        rate,
        duration,
        ..Default::default()
    };
    let contract = driver::prepare(c, w.as_ref(), &cfg).unwrap();
    let rec = driver::run_benchmark(&cfg, c, w.as_ref(), contract);
    compute_metrics(&rec)
}

#[test]
fn pbft_commits_and_agrees() {
    let mut c = cluster(4, ConsensusKind::Pbft, 1);
    let s = run(&mut c, "donothing", 20.0, 20_000);
    assert!(s.aborted.is_none(), "{s:?}");
    assert!(s.succeeded > 1000, "{s:?}");
    assert_eq!(s.fork_ratio, 1.0);
    c.run_until(c.now() + 5_000);
    assert!(c.converged());
}

#[test]
fn pow_commits_and_agrees() {
    let mut c = cluster(4, ConsensusKind::Pow, 2);
    let s = run(&mut c, "donothing", 5.0, 60_000);
    assert!(s.aborted.is_none(), "{s:?}");
    assert!(s.succeeded > 500, "{s:?}");
    let n = c.now();
    c.run_until(n + 10);
    let head = c.node(0).head_height();
    assert!(head > 20, "{head}");
}

#[test]
fn poa_commits_and_agrees() {
    let mut c = cluster(4, ConsensusKind::Poa, 3);
    let s = run(&mut c, "smallbank", 5.0, 30_000);
    assert!(s.aborted.is_none(), "{s:?}");
    assert!(s.succeeded > 400, "{s:?}");
    assert!(c.converged());
}

#[test]
fn get_block_chain_links() {
    let mut c = cluster(4, ConsensusKind::Pbft, 4);
    let _ = run(&mut c, "donothing", 10.0, 5_000);
    let g = c.get_block(BlockRef::Height(0)).unwrap();
    assert_eq!(g.height(), 0);
    let mut prev = g.id();
    for h in 1..=c.node(0).head_height() {
        let b = c.get_block(BlockRef::Height(h)).unwrap();
        assert_eq!(b.header.parent, prev);
        prev = b.id();
    }
    assert!(c
        .get_block(BlockRef::Id(ledgerbench::hash::Hash256([7; 32])))
        .is_err());
}

#[test]
fn ghost_rule_runs() {
    let mut cfg = consensus(ConsensusKind::Pow);
    cfg.fork_rule = ForkRule::Ghost;
    let mut c = Cluster::new(ClusterConfig {
        nodes: 4,
        consensus: cfg,
        node: NodeConfig::default(),
        network: NetConfig::default(),
        faults: FaultPolicy::default(),
        seed: 5,
    })
    .unwrap();
    c.run_until(30_000);
    assert!(c.node(0).head_height() > 5);
}
