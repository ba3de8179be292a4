//! One test per acceptance criterion. Each prints a single PASS/FAIL line to
//! the real stdout (bypassing the harness capture) before asserting.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::io::Write;
use std::sync::{Mutex, MutexGuard};
use std::time::{Duration, Instant};

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use sha2::{Digest, Sha256};

use ledgerbench::chain::{AccountId, Block, ForkRule, Transaction};
use ledgerbench::cluster::{Cluster, ClusterConfig};
use ledgerbench::consensus::pow::pow_try_mine;
use ledgerbench::consensus::{ConsensusConfig, ConsensusKind};
use ledgerbench::driver::metrics::queue_slope;
use ledgerbench::driver::{RunConfig, TxRequest};
use ledgerbench::exec::contracts::smallbank::{checking_key, savings_key};
use ledgerbench::exec::{self, ContractId, ExecStatus, GasSchedule, Receipt, Value};
use ledgerbench::hash::Hash256;
use ledgerbench::netsim::Crash;
use ledgerbench::scenario::{self, AttackSpec, Outcome, RunOptions, Scenario, BUNDLED};
use ledgerbench::state::{StateKey, StateStore, StoreVariant};
use ledgerbench::workloads::analytics::{
    analytics_preload, analytics_q1, analytics_q2, PreloadParams, Strategy,
};
use ledgerbench::workloads::{self, smallbank_request, AccountsParams, WorkloadSpec};

/// Criteria with wall-clock budgets run one at a time so timings are not
/// skewed by each other.
static SERIAL: Mutex<()> = Mutex::new(());

fn serial() -> MutexGuard<'static, ()> {
    SERIAL.lock().unwrap_or_else(|e| e.into_inner())
}

fn report(n: u32, name: &str, ok: bool, detail: &str) {
    let line = format!(
        "[{}] criterion {n:>2} {name}: {detail}\n",
        if ok { "PASS" } else { "FAIL" }
    );
    let mut out = std::io::stdout().lock();
    let _ = out.write_all(line.as_bytes());
    let _ = out.flush();
}

/// Collects named checks, reports once, then asserts.
struct Verdict {
    n: u32,
    name: &'static str,
    failures: Vec<String>,
    notes: Vec<String>,
    start: Instant,
    budget: Option<Duration>,
}

impl Verdict {
    fn new(n: u32, name: &'static str, budget_secs: Option<u64>) -> Self {
        Verdict {
            n,
            name,
            failures: Vec::new(),
            notes: Vec::new(),
            start: Instant::now(),
            budget: budget_secs.map(Duration::from_secs),
        }
    }

    fn check(&mut self, ok: bool, what: impl Into<String>) {
        let what = what.into();
        if ok {
            self.notes.push(what);
        } else {
            self.failures.push(what);
        }
    }

    fn finish(mut self) {
        let elapsed = self.start.elapsed();
        if let Some(b) = self.budget {
            self.check(
                elapsed < b,
                format!("wall {:.2}s < {}s", elapsed.as_secs_f64(), b.as_secs()),
            );
        }
        let ok = self.failures.is_empty();
        let detail = if ok {
            self.notes.join("; ")
        } else {
            format!("failed: {}", self.failures.join("; "))
        };
        report(self.n, self.name, ok, &detail);
        assert!(ok, "criterion {} {}: {}", self.n, self.name, detail);
    }
}

fn partition_scenario(kind: ConsensusKind, seed: u64) -> Scenario {
    let consensus = match kind {
        ConsensusKind::Pbft => r#"{ "kind": "pbft" }"#,
        ConsensusKind::Pow => unreachable!("PoW uses the bundled partition scenario"),
        ConsensusKind::Poa => r#"{ "kind": "poa", "step_duration": 1000 }"#,
    };
    Scenario::from_json(&format!(
        r#"{{
            "name": "partition_{k}",
            "nodes": 8,
            "consensus": {consensus},
            "workload": {{ "name": "donothing" }},
            "run": {{ "clients": 4, "rate": 4, "duration": 300000, "poll_interval": 1000, "seed": {seed} }}
        }}"#,
        k = kind.name()
    ))
    .unwrap()
}

fn halves_attack() -> AttackSpec {
    AttackSpec {
        start: 100_000,
        duration: 150_000,
        group_a: None,
        group_b: None,
    }
}

/// Confirmed height seen by the polling client at or before `tick`.
fn height_at(outcome: &Outcome, tick: u64) -> u64 {
    outcome
        .record
        .blocks
        .iter()
        .take_while(|b| b.tick <= tick)
        .last()
        .map_or(0, |b| b.height)
}

#[test]
fn criterion_01_pbft_partition_safety() {
    let _g = serial();
    let mut v = Verdict::new(1, "PBFT safety under partition", Some(10));
    let s = partition_scenario(ConsensusKind::Pbft, 11);
    let attack = halves_attack();
    let (outcome, report) = scenario::attack(&s, &attack, &RunOptions::default()).unwrap();
    let gap = outcome.cluster.fork_gap();
    v.check(gap.delta() == 0, format!("forked blocks {}", gap.delta()));
    v.check(gap.ratio == 1.0, format!("fork_ratio {}", gap.ratio));
    v.check(
        report.delta_max == 0,
        format!("max delta {}", report.delta_max),
    );
    let frozen = height_at(&outcome, attack.start + 5_000) == height_at(&outcome, attack.heal());
    v.check(frozen, "no commits while split 4/4");
    match report.first_commit_after_heal {
        Some(t) => v.check(
            t <= attack.heal() + 60_000,
            format!(
                "first commit {:.1}s after heal",
                (t - attack.heal()) as f64 / 1000.0
            ),
        ),
        None => v.check(false, "no commit after heal"),
    }
    v.finish();
}

#[test]
fn criterion_02_pow_poa_fork_exposure() {
    let _g = serial();
    let mut v = Verdict::new(2, "PoW/PoA fork exposure", Some(10));
    let attack = halves_attack();
    let pow = scenario::bundled("partition_pow").unwrap().unwrap();
    for (kind, s) in [
        (ConsensusKind::Pow, pow),
        (
            ConsensusKind::Poa,
            partition_scenario(ConsensusKind::Poa, 22),
        ),
    ] {
        let (_, r) = scenario::attack(&s, &attack, &RunOptions::default()).unwrap();
        v.check(
            r.window_fork_fraction > 0.0,
            format!(
                "{} forked fraction {:.3} of {} blocks",
                kind.name(),
                r.window_fork_fraction,
                r.window_blocks
            ),
        );
        let stop = r.delta_last_increase.unwrap_or(0);
        v.check(
            stop <= attack.heal() + 30_000,
            format!(
                "{} delta {} stops growing {:+.1}s from heal",
                kind.name(),
                r.delta_final,
                (stop as f64 - attack.heal() as f64) / 1000.0
            ),
        );
    }
    v.finish();
}

fn crash_scenario(nodes: usize) -> Scenario {
    let mut s = Scenario::from_json(&format!(
        r#"{{
            "name": "crash_{nodes}",
            "nodes": {nodes},
            "consensus": {{ "kind": "pbft", "strict_quorum": true }},
            "workload": {{ "name": "donothing" }},
            "run": {{ "clients": 8, "rate": 5, "duration": 350000, "poll_interval": 1000, "seed": 31 }}
        }}"#
    ))
    .unwrap();
    // Includes the view-0 leader.
    s.faults.crashes = (0..4).map(|node| Crash { node, at: 250_000 }).collect();
    s
}

#[test]
fn criterion_03_crash_tolerance_boundary() {
    let _g = serial();
    let crash = 250_000;
    let mut v = Verdict::new(3, "crash tolerance boundary", None);
    for (nodes, halts) in [(12usize, true), (16, false)] {
        let start = Instant::now();
        let out = scenario::run(&crash_scenario(nodes), &RunOptions::default()).unwrap();
        let end = out.record.end_tick;
        let at_crash = height_at(&out, crash);
        let after = height_at(&out, end) - at_crash;
        let rate_before = (at_crash - height_at(&out, crash - 100_000)) as f64 / 100.0;
        let rate_after = after as f64 / ((end - crash) as f64 / 1000.0);
        let tip_after = out
            .cluster
            .nodes()
            .iter()
            .filter(|n| out.cluster.is_live(n.id()))
            .map(|n| n.head_height())
            .max()
            .unwrap_or(0);
        if halts {
            v.check(
                after == 0 && tip_after == at_crash,
                format!("N={nodes}: {after} commits after crash"),
            );
        } else {
            v.check(
                after > 0 && rate_after < rate_before,
                format!("N={nodes}: {rate_before:.2} -> {rate_after:.2} blocks/s"),
            );
        }
        let wall = start.elapsed().as_secs_f64();
        v.check(wall < 10.0, format!("N={nodes} wall {wall:.2}s < 10s"));
    }
    v.finish();
}

fn pow_candidate(i: u64) -> Block {
    let mut b = Block::genesis();
    b.header.height = 1;
    b.header.parent = Hash256([9; 32]);
    b.header.timestamp = i;
    b
}

#[test]
fn criterion_04_pow_statistics() {
    let _g = serial();
    let mut v = Verdict::new(4, "PoW statistics", None);

    let d = 2_000u64;
    let budget = 256u64;
    let blocks = 500u64;
    let mut total = 0u64;
    for i in 0..blocks {
        let mut seed = i << 32;
        loop {
            seed += 1;
            match pow_try_mine(pow_candidate(i), d, budget, seed) {
                Some((_, used)) => {
                    total += used;
                    break;
                }
                None => total += budget,
            }
        }
    }
    let mean = total as f64 / blocks as f64;
    v.check(
        (mean - d as f64).abs() <= 0.2 * d as f64,
        format!("mean attempts {mean:.0} vs d={d} over {blocks} blocks"),
    );

    // Two miners at one attempt per tick settle near difficulty 2000.
    let target = 1_000u64;
    let mut c = Cluster::new(ClusterConfig {
        nodes: 2,
        consensus: ConsensusConfig {
            kind: ConsensusKind::Pow,
            difficulty: 500,
            retarget: true,
            target_interval: target,
            attempts_per_tick: 1,
            ..Default::default()
        },
        node: Default::default(),
        network: Default::default(),
        faults: Default::default(),
        seed: 41,
    })
    .unwrap();
    while c.node(0).head_height() < 1_000 && c.now() < 5_000_000 {
        let t = c.now() + 50_000;
        c.run_until(t);
    }
    let main = c.blocks_on_main(0);
    v.check(
        main.len() > 1_000,
        format!("{} blocks mined", main.len() - 1),
    );
    let tail: Vec<u64> = main[main.len().min(501) - 1..=main.len().min(1001) - 1]
        .iter()
        .map(|b| b.header.timestamp)
        .collect();
    let interval = (tail[tail.len() - 1] - tail[0]) as f64 / (tail.len() - 1) as f64;
    v.check(
        (interval - target as f64).abs() <= 0.2 * target as f64,
        format!("mean interval {interval:.0} vs target {target} over blocks 501..1000"),
    );
    v.finish();
}

// ---- independent Merkle oracles ------------------------------------------------

fn oracle_sha(parts: &[&[u8]]) -> [u8; 32] {
    let mut h = Sha256::new();
    for p in parts {
        h.update(p);
    }
    h.finalize().into()
}

fn nibbles(b: &[u8]) -> Vec<u8> {
    b.iter().flat_map(|x| [x >> 4, x & 15]).collect()
}

/// Recursive build of the canonical hex trie over `(path, value_hash)`.
fn trie_node(entries: &[(Vec<u8>, [u8; 32])]) -> [u8; 32] {
    if entries.len() == 1 {
        let (p, v) = &entries[0];
        return oracle_sha(&[&[0], &(p.len() as u32).to_be_bytes(), p, v]);
    }
    let shortest = entries.iter().map(|e| e.0.len()).min().unwrap();
    let mut common = 0;
    while common < shortest && entries.iter().all(|e| e.0[common] == entries[0].0[common]) {
        common += 1;
    }
    if common > 0 {
        let prefix = entries[0].0[..common].to_vec();
        let rest: Vec<_> = entries
            .iter()
            .map(|(p, v)| (p[common..].to_vec(), *v))
            .collect();
        let child = trie_node(&rest);
        return oracle_sha(&[&[1], &(prefix.len() as u32).to_be_bytes(), &prefix, &child]);
    }
    let mut buf = vec![2u8];
    let mut value = None;
    let mut groups: BTreeMap<u8, Vec<(Vec<u8>, [u8; 32])>> = BTreeMap::new();
    for (p, v) in entries {
        match p.first() {
            None => value = Some(*v),
            Some(n) => groups.entry(*n).or_default().push((p[1..].to_vec(), *v)),
        }
    }
    for n in 0..16u8 {
        match groups.get(&n) {
            Some(g) => buf.extend_from_slice(&trie_node(g)),
            None => buf.extend_from_slice(&[0; 32]),
        }
    }
    match value {
        Some(v) => {
            buf.push(1);
            buf.extend_from_slice(&v);
        }
        None => {
            buf.push(0);
            buf.extend_from_slice(&[0; 32]);
        }
    }
    oracle_sha(&[&buf])
}

fn patricia_oracle(live: &BTreeMap<Vec<u8>, Vec<u8>>) -> Hash256 {
    if live.is_empty() {
        return Hash256::ZERO;
    }
    let entries: Vec<_> = live
        .iter()
        .map(|(k, v)| (nibbles(k), oracle_sha(&[v])))
        .collect();
    Hash256(trie_node(&entries))
}

fn bucket_oracle(live: &BTreeMap<Vec<u8>, Vec<u8>>, buckets: u64, fanout: usize) -> Hash256 {
    if live.is_empty() {
        return Hash256::ZERO;
    }
    let mut contents: Vec<Vec<(&[u8], &[u8])>> = vec![Vec::new(); buckets as usize];
    for (k, v) in live {
        let h = oracle_sha(&[k]);
        let idx = u64::from_be_bytes(h[..8].try_into().unwrap()) % buckets;
        contents[idx as usize].push((k, v));
    }
    let mut level: Vec<[u8; 32]> = contents
        .iter()
        .map(|c| {
            if c.is_empty() {
                return [0; 32];
            }
            let mut buf = Vec::new();
            for (k, v) in c {
                buf.extend_from_slice(&(k.len() as u32).to_be_bytes());
                buf.extend_from_slice(k);
                buf.extend_from_slice(&(v.len() as u32).to_be_bytes());
                buf.extend_from_slice(v);
            }
            oracle_sha(&[&buf])
        })
        .collect();
    loop {
        level = level
            .chunks(fanout)
            .map(|c| oracle_sha(&[&c.concat()]))
            .collect();
        if level.len() == 1 {
            break;
        }
    }
    Hash256(level[0])
}

fn encoded(k: &StateKey) -> Vec<u8> {
    [&k.namespace.0[..], &k.key].concat()
}

fn random_ops(seed: u64, n: usize) -> Vec<(StateKey, Option<Vec<u8>>)> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let namespaces = [Hash256([1; 32]), Hash256([2; 32])];
    (0..n)
        .map(|_| {
            let ns = namespaces[rng.gen_range(0..2)];
            // Short keys over a small alphabet force shared prefixes.
            let len = rng.gen_range(1..=4);
            let key: Vec<u8> = (0..len).map(|_| rng.gen_range(0..4u8) * 17).collect();
            let value = if rng.gen_bool(0.25) {
                None
            } else {
                let vl = rng.gen_range(1..=24);
                Some((0..vl).map(|_| rng.gen()).collect())
            };
            (StateKey::new(ns, key), value)
        })
        .collect()
}

#[test]
fn criterion_05_merkle_correctness() {
    let _g = serial();
    let mut v = Verdict::new(5, "Merkle correctness", Some(5));
    type Oracle = Box<dyn Fn(&BTreeMap<Vec<u8>, Vec<u8>>) -> Hash256>;
    let variants: Vec<(&str, StoreVariant, Oracle)> = vec![
        (
            "patricia",
            StoreVariant::Patricia,
            Box::new(patricia_oracle),
        ),
        (
            "bucket",
            StoreVariant::bucket(),
            Box::new(|l| bucket_oracle(l, 1009, 2)),
        ),
        (
            "bucket-7x3",
            StoreVariant::Bucket {
                buckets: 7,
                fanout: 3,
            },
            Box::new(|l| bucket_oracle(l, 7, 3)),
        ),
    ];
    for (name, variant, oracle) in &variants {
        let (mut checkpoints, mut mismatches, mut order_bad, mut insensitive) = (0, 0, 0, 0);
        for seed in 0..3u64 {
            let mut store = StateStore::new(*variant);
            let mut live: BTreeMap<Vec<u8>, Vec<u8>> = BTreeMap::new();
            for (i, (k, val)) in random_ops(seed, 1000).into_iter().enumerate() {
                match val {
                    Some(val) => {
                        store.put(k.clone(), val.clone(), 1).unwrap();
                        live.insert(encoded(&k), val);
                    }
                    None => {
                        store.delete(&k, 1).unwrap();
                        live.remove(&encoded(&k));
                    }
                }
                if i % 25 == 24 {
                    checkpoints += 1;
                    if store.root() != oracle(&live) {
                        mismatches += 1;
                    }
                }
            }
            let root = store.root();
            let mut entries: Vec<(StateKey, Vec<u8>)> = store
                .live_entries()
                .map(|(k, v)| (k.clone(), v.clone()))
                .collect();
            let mut rng = ChaCha8Rng::seed_from_u64(seed + 100);
            for _ in 0..3 {
                entries.shuffle(&mut rng);
                let mut fresh = StateStore::new(*variant);
                for (k, val) in &entries {
                    fresh.put(k.clone(), val.clone(), 1).unwrap();
                }
                if fresh.root() != root {
                    order_bad += 1;
                }
            }
            for m in 0..34 {
                let (k, val) = &entries[rng.gen_range(0..entries.len())];
                let mut mutated = val.clone();
                let at = rng.gen_range(0..mutated.len());
                mutated[at] ^= 1 << (m % 8);
                let mut s = store.clone();
                s.put(k.clone(), mutated, 2).unwrap();
                if s.root() == root {
                    insensitive += 1;
                }
            }
        }
        v.check(
            mismatches == 0,
            format!("{name}: {mismatches}/{checkpoints} oracle mismatches"),
        );
        v.check(order_bad == 0, format!("{name}: order independent"));
        v.check(
            insensitive == 0,
            format!("{name}: 102 single-byte mutations all change the root"),
        );
    }
    v.finish();
}

fn deploy_all(store: &mut StateStore, specs: &[WorkloadSpec]) -> Vec<ContractId> {
    specs
        .iter()
        .enumerate()
        .map(|(i, spec)| {
            let w = workloads::build(spec).unwrap();
            let c = exec::deploy_contract(
                store,
                AccountId(u64::MAX),
                i as u64,
                w.contract_code().name(),
                &w.init_args(),
                0,
            )
            .unwrap();
            for (j, r) in w.preload().into_iter().enumerate() {
                let tx = to_tx(&r, c, j as u64, u64::MAX / 4);
                assert!(exec::execute_tx(store, &tx, &GasSchedule::default(), 0).is_ok());
            }
            c
        })
        .collect()
}

fn to_tx(r: &TxRequest, contract: ContractId, nonce: u64, gas: u64) -> Transaction {
    Transaction::new(
        r.sender,
        contract,
        r.function.clone(),
        r.args.clone(),
        r.value,
        nonce,
        gas,
    )
}

fn mixed_stream(
    contracts: &[ContractId],
    specs: &[WorkloadSpec],
    n: usize,
    seed: u64,
) -> Vec<Transaction> {
    let mut clients: Vec<_> = specs
        .iter()
        .map(|s| workloads::build(s).unwrap().client(0, seed))
        .collect();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n)
        .map(|i| {
            let w = rng.gen_range(0..clients.len());
            let r = clients[w].next_transaction().unwrap();
            to_tx(&r, contracts[w], i as u64, 50_000_000)
        })
        .collect()
}

fn exec_specs() -> Vec<WorkloadSpec> {
    let spec = |name: &str, params: serde_json::Value| WorkloadSpec {
        name: name.into(),
        params,
    };
    vec![
        spec("ycsb", serde_json::json!({ "record_count": 200 })),
        spec(
            "smallbank",
            serde_json::json!({ "account_count": 100, "initial_balance": 50, "max_amount": 40 }),
        ),
        spec("etherid", serde_json::Value::Null),
        spec("doubler", serde_json::Value::Null),
        spec("wavespresale", serde_json::Value::Null),
        spec("versionkv", serde_json::json!({ "account_count": 100 })),
        spec("ioheavy", serde_json::json!({ "n": 20 })),
        spec("cpuheavy", serde_json::json!({ "n": 200 })),
    ]
}

#[test]
fn criterion_06_execution_determinism_and_atomicity() {
    let _g = serial();
    let mut v = Verdict::new(6, "execution determinism & atomicity", None);
    let specs = exec_specs();
    let schedule = GasSchedule::default();

    for variant in [StoreVariant::Patricia, StoreVariant::bucket()] {
        let mut a = StateStore::new(variant);
        let mut b = StateStore::new(variant);
        let ca = deploy_all(&mut a, &specs);
        let cb = deploy_all(&mut b, &specs);
        let stream = mixed_stream(&ca, &specs, 2_000, 61);
        let (mut diverged, mut failed) = (0, 0);
        for (i, tx) in stream.iter().enumerate() {
            let h = 1 + i as u64 / 50;
            let ra: Receipt = exec::execute_tx(&mut a, tx, &schedule, h);
            let rb: Receipt = exec::execute_tx(&mut b, tx, &schedule, h);
            failed += usize::from(!ra.is_ok());
            if ra != rb || a.root() != b.root() {
                diverged += 1;
            }
        }
        v.check(
            ca == cb && diverged == 0,
            format!("{variant:?}: 2000 txs, {failed} reverted, {diverged} divergent"),
        );
    }

    let mut store = StateStore::new(StoreVariant::Patricia);
    let contracts = deploy_all(&mut store, &specs);
    let stream = mixed_stream(&contracts, &specs, 4_000, 62);
    let mut rng = ChaCha8Rng::seed_from_u64(63);
    let (mut cases, mut broken) = (0, 0);
    for (i, tx) in stream.iter().enumerate() {
        if cases == 100 {
            break;
        }
        let h = 1 + i as u64;
        let mut probe = store.clone();
        let full = exec::execute_tx(&mut probe, tx, &schedule, h);
        if full.is_ok() && full.gas_used > schedule.base_tx {
            cases += 1;
            let before = store.root();
            let entries = store.len();
            let mut starved = tx.clone();
            starved.gas_limit = rng.gen_range(0..full.gas_used);
            let r = exec::execute_tx(&mut store, &starved, &schedule, h);
            if r.status != ExecStatus::RevertedOutOfGas
                || store.root() != before
                || store.len() != entries
            {
                broken += 1;
            }
        }
        exec::execute_tx(&mut store, tx, &schedule, h);
    }
    v.check(
        cases == 100 && broken == 0,
        format!("{cases} forced out-of-gas cases, {broken} left state changed"),
    );
    v.finish();
}

fn read_u64(store: &StateStore, ns: Hash256, key: Vec<u8>) -> u64 {
    u64::from_be_bytes(
        store
            .get(&StateKey::new(ns, key))
            .unwrap()
            .try_into()
            .unwrap(),
    )
}

#[test]
fn criterion_07_smallbank_conservation() {
    let _g = serial();
    let mut v = Verdict::new(7, "Smallbank conservation", None);
    let p = AccountsParams {
        account_count: 50,
        initial_balance: 100,
        max_amount: 300,
    };
    let mut store = StateStore::new(StoreVariant::Patricia);
    let init = [Value::from(p.account_count), Value::from(p.initial_balance)];
    let c = exec::deploy_contract(&mut store, AccountId(1), 0, "smallbank", &init, 0).unwrap();
    let total = |s: &StateStore| -> u64 {
        (0..p.account_count)
            .map(|a| {
                read_u64(s, c.address, savings_key(a)) + read_u64(s, c.address, checking_key(a))
            })
            .sum()
    };
    let expected = 2 * p.account_count * p.initial_balance;
    let mut rng = ChaCha8Rng::seed_from_u64(71);
    let (mut ok, mut failed, mut drift, mut dirty_failures) = (0, 0, 0, 0);
    for i in 0..10_000u64 {
        let r = smallbank_request(&p, &mut rng);
        let tx = to_tx(&r, c, i + 1, 1_000_000);
        let before = store.root();
        let receipt = exec::execute_tx(&mut store, &tx, &GasSchedule::default(), 1 + i / 100);
        if receipt.is_ok() {
            ok += 1;
        } else {
            failed += 1;
            if store.root() != before {
                dirty_failures += 1;
            }
        }
        if i % 100 == 99 && total(&store) != expected {
            drift += 1;
        }
    }
    v.check(
        drift == 0 && total(&store) == expected,
        format!("total stays {expected} over 10000 procedures ({ok} ok)"),
    );
    v.check(
        failed > 0 && dirty_failures == 0,
        format!("{failed} failed procedures, {dirty_failures} changed state"),
    );
    v.finish();
}

#[test]
fn criterion_08_analytics_equivalence_and_roundtrips() {
    let _g = serial();
    let mut v = Verdict::new(8, "analytics equivalence & roundtrips", None);
    let mut c = Cluster::new(ClusterConfig {
        nodes: 4,
        consensus: ConsensusConfig {
            kind: ConsensusKind::Pbft,
            batch_timeout: 20,
            ..Default::default()
        },
        node: Default::default(),
        network: Default::default(),
        faults: Default::default(),
        seed: 81,
    })
    .unwrap();
    let p = PreloadParams::default();
    let cfg = RunConfig {
        poll_interval: 50,
        ..Default::default()
    };
    let pre = analytics_preload(&mut c, &p, &cfg).unwrap();
    let heights: BTreeSet<u64> = pre.transfers.iter().map(|t| t.height).collect();
    v.check(
        heights.len() as u64 == p.blocks,
        format!(
            "{} transfers over {} blocks",
            pre.transfers.len(),
            heights.len()
        ),
    );

    let lo = *heights.first().unwrap();
    let hi = *heights.last().unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(82);
    let mut ranges = vec![(lo, hi), (lo, lo + 9), (hi - 99, hi), (0, hi)];
    for _ in 0..16 {
        let i = rng.gen_range(lo..hi);
        let j = rng.gen_range(i..=hi.min(i + 200));
        ranges.push((i, j));
    }
    let (mut q1_bad, mut q2_bad, mut rt_bad, mut min_ratio) = (0, 0, 0, f64::INFINITY);
    for &(i, j) in &ranges {
        let in_range =
            |t: &&ledgerbench::workloads::analytics::Transfer| (i..=j).contains(&t.height);
        let want: u64 = pre.transfers.iter().filter(in_range).map(|t| t.value).sum();
        let got = analytics_q1(&mut c, i, j).unwrap();
        if got.value != want || got.roundtrips != j - i + 1 {
            q1_bad += 1;
        }
        for _ in 0..3 {
            let acc = pre.transfers[rng.gen_range(0..pre.transfers.len())].from;
            let want = pre
                .transfers
                .iter()
                .filter(in_range)
                .filter(|t| t.from == acc || t.to == acc)
                .map(|t| t.value)
                .max();
            let scan = analytics_q2(&mut c, &pre.contract, acc, i, j, Strategy::Scan).unwrap();
            let ver = analytics_q2(&mut c, &pre.contract, acc, i, j, Strategy::Versioned).unwrap();
            if scan.value != want || ver.value != want {
                q2_bad += 1;
            }
            if scan.roundtrips != j - i + 1 || ver.roundtrips != 1 {
                rt_bad += 1;
            }
            if j - i + 1 >= 10 {
                min_ratio = min_ratio.min(scan.roundtrips as f64 / ver.roundtrips as f64);
            }
        }
    }
    v.check(
        q1_bad == 0,
        format!("Q1 matches oracle on {} ranges", ranges.len()),
    );
    v.check(
        q2_bad == 0,
        format!("Q2 scan and versioned match oracle ({q2_bad} bad)"),
    );
    v.check(
        rt_bad == 0 && min_ratio >= 10.0,
        format!("Q2 roundtrips scan/versioned >= {min_ratio:.0}x on ranges of 10+ blocks"),
    );
    v.finish();
}

fn queue_scenario(rate: f64) -> Scenario {
    let mut s = scenario::bundled("queue_pbft").unwrap().unwrap();
    s.run.rate = rate;
    s.run.duration = 60_000;
    s
}

#[test]
fn criterion_09_queue_dynamics() {
    let _g = serial();
    let mut v = Verdict::new(9, "queue dynamics", None);
    let overload = scenario::run(&queue_scenario(64.0), &RunOptions::default()).unwrap();
    let capacity = overload.summary.summary.throughput;
    let clients = overload.record.txs.len() as f64 / (64.0 * 60.0);
    v.check(
        capacity > 0.0,
        format!("measured capacity {capacity:.1} tx/s"),
    );
    let per_client = |frac: f64| frac * capacity / clients;

    let light = scenario::run(&queue_scenario(per_client(0.25)), &RunOptions::default()).unwrap();
    let half = (light.record.start_tick + light.record.end_tick) / 2;
    let slope = queue_slope(&light.record, half);
    let max_q = light.summary.summary.max_queue;
    let late_max = light
        .record
        .queue
        .iter()
        .filter(|(t, _)| *t >= half)
        .map(|q| q.1)
        .max()
        .unwrap_or(0);
    let early_max = light
        .record
        .queue
        .iter()
        .filter(|(t, _)| *t < half)
        .map(|q| q.1)
        .max()
        .unwrap_or(0);
    // Per-second growth below one tx means no trend at this load.
    v.check(
        slope * 1000.0 < 1.0 && late_max <= early_max.max(1) * 2,
        format!("25%: max queue {max_q}, late slope {:.3}/s", slope * 1000.0),
    );

    let heavy = scenario::run(&queue_scenario(per_client(4.0)), &RunOptions::default()).unwrap();
    let half = (heavy.record.start_tick + heavy.record.end_tick) / 2;
    let slope = queue_slope(&heavy.record, heavy.record.start_tick);
    let late_slope = queue_slope(&heavy.record, half);
    let growth = 3.0 * capacity;
    v.check(
        slope * 1000.0 > 0.5 * growth && late_slope > 0.0,
        format!(
            "4x: queue grows {:.0}/s (expected about {growth:.0}/s), max {}",
            slope * 1000.0,
            heavy.summary.summary.max_queue
        ),
    );
    v.finish();
}

fn run_bytes(s: &Scenario) -> (Vec<u8>, Vec<u8>) {
    let dir = tempfile::tempdir().unwrap();
    let opts = RunOptions {
        out: Some(dir.path().to_path_buf()),
        ..Default::default()
    };
    scenario::run(s, &opts).unwrap();
    (
        std::fs::read(dir.path().join("summary.json")).unwrap(),
        std::fs::read(dir.path().join("txs.csv")).unwrap(),
    )
}

#[test]
fn criterion_10_determinism() {
    let _g = serial();
    let mut v = Verdict::new(10, "determinism of bundled scenarios", None);
    for (name, _) in BUNDLED {
        let s = scenario::bundled(name).unwrap().unwrap();
        let (s1, t1) = run_bytes(&s);
        let (s2, t2) = run_bytes(&s);
        v.check(
            s1 == s2 && t1 == t2 && !t1.is_empty(),
            format!(
                "{name} ({} tx rows)",
                t1.iter().filter(|b| **b == b'\n').count() - 1
            ),
        );
    }
    v.finish();
}

#[test]
fn criterion_11_cpuheavy_ioheavy_sanity() {
    let _g = serial();
    let mut v = Verdict::new(11, "CPUHeavy/IOHeavy sanity", None);
    let schedule = GasSchedule::default();
    let mut last_gas = 0;
    let mut gas_by_n = Vec::new();
    for (i, n) in [1_000u64, 10_000, 100_000].into_iter().enumerate() {
        let mut store = StateStore::new(StoreVariant::Patricia);
        let c = exec::deploy_contract(
            &mut store,
            AccountId(1),
            i as u64,
            "cpuheavy",
            &[n.into()],
            0,
        )
        .unwrap();
        let tx = Transaction::new(AccountId(1), c, "sort", vec![], 0, 100, u64::MAX / 4);
        let r = exec::execute_tx(&mut store, &tx, &schedule, 1);
        let got = exec::query(&store, &c, "get", &[], 1).unwrap();
        let mut want: Vec<i64> = (1..=n as i64).rev().collect();
        want.sort_unstable();
        let sorted = got
            .as_list()
            .is_some_and(|l| l.iter().map(|x| x.as_int().unwrap()).eq(want));
        v.check(r.is_ok() && sorted, format!("n={n} sorted"));
        v.check(r.gas_used > last_gas, format!("gas {}", r.gas_used));
        last_gas = r.gas_used;
        gas_by_n.push(r.gas_used);
    }

    let mut store = StateStore::new(StoreVariant::Patricia);
    let c = exec::deploy_contract(&mut store, AccountId(1), 0, "ioheavy", &[], 0).unwrap();
    let n = 10_000u64;
    let seed = 1_234u64;
    let w = Transaction::new(
        AccountId(1),
        c,
        "write_n",
        vec![n.into(), seed.into()],
        0,
        1,
        u64::MAX / 4,
    );
    let wr = exec::execute_tx(&mut store, &w, &schedule, 1);
    let r = Transaction::new(
        AccountId(1),
        c,
        "read_n",
        vec![n.into(), seed.into()],
        0,
        2,
        u64::MAX / 4,
    );
    let rr = exec::execute_tx(&mut store, &r, &schedule, 2);
    let hits = rr.return_value.as_u64().unwrap_or(0);
    let sizes: HashMap<(usize, usize), usize> = store
        .live_entries()
        .filter(|(k, _)| k.namespace == c.address)
        .fold(HashMap::new(), |mut m, (k, v)| {
            *m.entry((k.key.len(), v.len())).or_default() += 1;
            m
        });
    v.check(
        wr.is_ok() && rr.is_ok() && hits == n,
        format!("read hit rate {}/{n}", hits),
    );
    v.check(
        sizes.get(&(20, 100)).copied().unwrap_or(0) as u64 == n,
        "20-byte keys, 100-byte values",
    );
    v.finish();
}

#[test]
fn bundled_partition_scenario_matches_attack_defaults() {
    let s = scenario::bundled("partition_pow").unwrap().unwrap();
    assert_eq!(s.attack, Some(halves_attack()));
    assert_eq!(s.consensus.fork_rule, ForkRule::Longest);
}
