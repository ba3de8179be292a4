//! Benchmark driver: paced asynchronous submission, confirmation polling
//! with reorg handling, and metric aggregation.

pub mod metrics;

use std::collections::{BTreeMap, HashMap};
use std::sync::Arc;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::chain::{AccountId, Block, ForkGap, Signer, Transaction};
use crate::exec::{ContractId, ContractKind, Value};
use crate::hash::{Encoder, Hash256};
use crate::node::{BlockRef, ConfirmedBlockView};

pub use metrics::{compute_metrics, percentile, Summary};

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum ConnectorError {
    #[error("server busy")]
    Busy,
    #[error("no server reachable")]
    Unavailable,
    #[error("{0}")]
    Rpc(String),
}

/// What the driver needs from a blockchain under test.
pub trait BlockchainConnector {
    /// Signing parameters clients must use for this chain.
    fn signer(&self) -> Signer;
    /// Submit a deploy transaction; returns the contract id and the tx id.
    fn deploy(
        &mut self,
        code: &str,
        init_args: Vec<Value>,
    ) -> Result<(ContractId, Hash256), ConnectorError>;
    /// Non-blocking submission through the server assigned to `client`.
    fn invoke(&mut self, client: usize, tx: Transaction) -> Result<Hash256, ConnectorError>;
    fn query(
        &mut self,
        contract: &ContractId,
        function: &str,
        args: &[Value],
    ) -> Result<Value, ConnectorError>;
    /// Confirmed blocks above `h`, ascending.
    fn get_latest_blocks(&mut self, h: u64) -> Result<Vec<ConfirmedBlockView>, ConnectorError>;
    fn get_block(&mut self, r: BlockRef) -> Result<Arc<Block>, ConnectorError>;
    /// Current main-branch id at `height`, used to detect reorgs.
    fn block_id_at(&mut self, height: u64) -> Option<Hash256>;
    fn now(&self) -> u64;
    /// Let the system run until `tick`.
    fn advance_to(&mut self, tick: u64);
    fn fork_gap(&self) -> ForkGap;
}

/// A contract call without framing; the driver assigns nonce, gas and
/// signature.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct TxRequest {
    pub sender: AccountId,
    pub function: String,
    pub args: Vec<Value>,
    pub value: u64,
}

impl TxRequest {
    pub fn new(sender: u64, function: &str, args: Vec<Value>) -> Self {
        TxRequest {
            sender: AccountId(sender),
            function: function.to_string(),
            args,
            value: 0,
        }
    }

    pub fn with_value(mut self, value: u64) -> Self {
        self.value = value;
        self
    }
}

/// Per-client transaction source. `None` means the client is done.
pub trait WorkloadConnector {
    fn next_transaction(&mut self) -> Option<TxRequest>;
}

pub trait Workload {
    fn name(&self) -> &str;
    fn contract_code(&self) -> ContractKind;
    fn init_args(&self) -> Vec<Value>;
    /// Transactions to commit before measurement starts.
    fn preload(&self) -> Vec<TxRequest> {
        Vec::new()
    }
    fn client(&self, index: usize, seed: u64) -> Box<dyn WorkloadConnector>;
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunConfig {
    pub clients: usize,
    pub threads_per_client: usize,
    /// Offered transactions per second per client.
    pub rate: f64,
    /// Measured run length in ticks.
    pub duration: u64,
    pub poll_interval: u64,
    pub blocking_mode: bool,
    pub gas_limit: u64,
    /// Longest wait for setup transactions to confirm.
    pub setup_timeout: u64,
    /// Blocking mode: give up on a transaction after this many ticks.
    pub tx_timeout: u64,
    pub seed: u64,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            clients: 8,
            threads_per_client: 1,
            rate: 8.0,
            duration: 60_000,
            poll_interval: 100,
            blocking_mode: false,
            gas_limit: 10_000_000,
            setup_timeout: 600_000,
            tx_timeout: 60_000,
            seed: 1,
        }
    }
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum DriverError {
    #[error("invalid run config: {0}")]
    Config(&'static str),
    #[error(transparent)]
    Connector(#[from] ConnectorError),
    #[error("setup did not confirm within {0} ticks")]
    SetupTimeout(u64),
    #[error("setup transaction {0} failed")]
    SetupFailed(Hash256),
}

impl RunConfig {
    pub fn validate(&self) -> Result<(), DriverError> {
        if self.clients == 0 {
            return Err(DriverError::Config("clients must be positive"));
        }
        if self.threads_per_client == 0 {
            return Err(DriverError::Config("threads_per_client must be positive"));
        }
        if !(self.rate > 0.0 && self.rate.is_finite()) {
            return Err(DriverError::Config("rate must be positive"));
        }
        if self.poll_interval == 0 {
            return Err(DriverError::Config("poll_interval must be positive"));
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TxStatus {
    Pending,
    Ok,
    Failed,
    Unconfirmed,
    Rejected,
}

impl TxStatus {
    pub fn name(&self) -> &'static str {
        match self {
            TxStatus::Pending => "pending",
            TxStatus::Ok => "ok",
            TxStatus::Failed => "failed",
            TxStatus::Unconfirmed => "unconfirmed",
            TxStatus::Rejected => "rejected",
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct TxRecord {
    pub id: Hash256,
    pub submit_tick: u64,
    pub confirm_tick: Option<u64>,
    pub status: TxStatus,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct BlockSample {
    pub tick: u64,
    /// Highest confirmed height seen so far.
    pub height: u64,
    pub gap: ForkGap,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct MetricsRecord {
    pub start_tick: u64,
    pub end_tick: u64,
    pub txs: Vec<TxRecord>,
    /// (tick, pending length) at every poll.
    pub queue: Vec<(u64, usize)>,
    pub blocks: Vec<BlockSample>,
    /// Transactions pulled back to pending by reorgs.
    pub reverted: u64,
    pub aborted: Option<String>,
}

/// Outstanding transactions, oldest first.
#[derive(Debug, Default)]
pub struct PendingQueue {
    by_id: HashMap<Hash256, (u64, usize)>,
    order: BTreeMap<u64, Hash256>,
    next: u64,
}

impl PendingQueue {
    /// Queue `id` (or move it to the back) with its record index.
    pub fn insert(&mut self, id: Hash256, record: usize) {
        self.remove(&id);
        self.by_id.insert(id, (self.next, record));
        self.order.insert(self.next, id);
        self.next += 1;
    }

    pub fn remove(&mut self, id: &Hash256) -> Option<usize> {
        let (seq, record) = self.by_id.remove(id)?;
        self.order.remove(&seq);
        Some(record)
    }

    pub fn len(&self) -> usize {
        self.by_id.len()
    }

    pub fn is_empty(&self) -> bool {
        self.by_id.is_empty()
    }

    pub fn contains(&self, id: &Hash256) -> bool {
        self.by_id.contains_key(id)
    }

    /// (id, record index), oldest first.
    pub fn iter(&self) -> impl Iterator<Item = (&Hash256, usize)> {
        self.order.values().map(|id| (id, self.by_id[id].1))
    }
}

/// Confirmation tracker: last polled height plus the ids seen at each
/// height, so displaced blocks can be detected.
#[derive(Debug, Default)]
pub struct Poller {
    seen: Vec<Hash256>,
    /// Our transactions (id, record index) by confirmation height.
    ours: HashMap<u64, Vec<(Hash256, usize)>>,
}

#[derive(Debug, Default, PartialEq, Eq)]
pub struct Matched {
    pub id: Hash256,
    /// Record index the id was queued with.
    pub record: usize,
    pub ok: bool,
    /// Height of the confirmed block holding the tx.
    pub height: u64,
}

#[derive(Debug, Default, PartialEq, Eq)]
pub struct PollResult {
    pub new_h: u64,
    /// Queued transactions found in new blocks.
    pub matched: Vec<Matched>,
    /// Previously matched (id, record index) whose block left the main branch.
    pub reverted: Vec<(Hash256, usize)>,
}

impl Poller {
    pub fn new() -> Self {
        Poller {
            seen: vec![Hash256::ZERO],
            ours: HashMap::new(),
        }
    }

    pub fn height(&self) -> u64 {
        (self.seen.len() - 1) as u64
    }

    /// Re-check the polled prefix from the top, then fetch newer blocks and
    /// match them against `queue`. Matched ids are removed from the queue;
    /// reverted ones are not re-added here.
    pub fn poll(
        &mut self,
        connector: &mut dyn BlockchainConnector,
        queue: &mut PendingQueue,
    ) -> Result<PollResult, ConnectorError> {
        let mut out = PollResult::default();
        let mut keep = self.seen.len() - 1;
        while keep > 0 && connector.block_id_at(keep as u64) != Some(self.seen[keep]) {
            keep -= 1;
        }
        for h in keep + 1..self.seen.len() {
            if let Some(ids) = self.ours.remove(&(h as u64)) {
                out.reverted.extend(ids);
            }
        }
        self.seen.truncate(keep + 1);

        let views = connector.get_latest_blocks(self.height())?;
        for v in views {
            if v.height != self.height() + 1 {
                // A different server may have answered; resume from our tip.
                continue;
            }
            self.seen.push(v.id);
            for (id, ok) in v.tx_ids.iter().zip(&v.tx_ok) {
                if let Some(record) = queue.remove(id) {
                    out.matched.push(Matched {
                        id: *id,
                        record,
                        ok: *ok,
                        height: v.height,
                    });
                    self.ours.entry(v.height).or_default().push((*id, record));
                }
            }
        }
        out.new_h = self.height();
        Ok(out)
    }
}

/// One-shot confirmation poll from height `h`: returns the new height and the
/// queued ids found in blocks `(h, new_h]`.
pub fn poll_confirmed(
    connector: &mut dyn BlockchainConnector,
    h: u64,
    queue: &mut PendingQueue,
) -> Result<(u64, Vec<Hash256>), ConnectorError> {
    let mut new_h = h;
    let mut matched = Vec::new();
    for v in connector.get_latest_blocks(h)? {
        new_h = new_h.max(v.height);
        for id in &v.tx_ids {
            if queue.remove(id).is_some() {
                matched.push(*id);
            }
        }
    }
    Ok((new_h, matched))
}

/// Derive a per-context seed.
pub fn sub_seed(seed: u64, label: &str, index: u64) -> u64 {
    let mut enc = Encoder::new();
    enc.u64(seed).str(label).u64(index);
    enc.digest().prefix_u64()
}

/// Assigns nonces and signs requests.
#[derive(Debug)]
struct Framer {
    signer: Signer,
    contract: ContractId,
    gas_limit: u64,
    nonce: u64,
}

impl Framer {
    fn frame(&mut self, r: TxRequest) -> Transaction {
        self.nonce += 1;
        Transaction::new_signed(
            &self.signer,
            r.sender,
            self.contract,
            r.function,
            r.args,
            r.value,
            self.nonce,
            self.gas_limit,
        )
    }
}

/// Poll until every id in `wait` is confirmed, or time out.
fn wait_confirmed(
    connector: &mut dyn BlockchainConnector,
    poller: &mut Poller,
    queue: &mut PendingQueue,
    poll_interval: u64,
    timeout: u64,
) -> Result<Vec<(Hash256, bool)>, DriverError> {
    let deadline = connector.now() + timeout;
    let mut matched = Vec::new();
    loop {
        let r = poller.poll(connector, queue)?;
        matched.extend(r.matched.into_iter().map(|m| (m.id, m.ok)));
        for (id, record) in r.reverted {
            matched.retain(|(m, _)| *m != id);
            queue.insert(id, record);
        }
        if queue.is_empty() {
            return Ok(matched);
        }
        let now = connector.now();
        if now >= deadline {
            return Err(DriverError::SetupTimeout(timeout));
        }
        connector.advance_to((now + poll_interval).min(deadline));
    }
}

/// Deploy the workload's contract and commit its preload transactions.
pub fn prepare(
    connector: &mut dyn BlockchainConnector,
    workload: &dyn Workload,
    cfg: &RunConfig,
) -> Result<ContractId, DriverError> {
    cfg.validate()?;
    let mut poller = Poller::new();
    let mut queue = PendingQueue::default();
    let (contract, deploy_id) =
        connector.deploy(workload.contract_code().name(), workload.init_args())?;
    queue.insert(deploy_id, 0);
    let done = wait_confirmed(
        connector,
        &mut poller,
        &mut queue,
        cfg.poll_interval,
        cfg.setup_timeout,
    )?;
    if done.iter().any(|(_, ok)| !ok) {
        return Err(DriverError::SetupFailed(deploy_id));
    }
    let preload = workload.preload();
    if preload.is_empty() {
        return Ok(contract);
    }
    let mut framer = Framer {
        signer: connector.signer(),
        contract,
        gas_limit: cfg.gas_limit,
        nonce: sub_seed(cfg.seed, "preload", 0) >> 16,
    };
    for r in preload {
        let tx = framer.frame(r);
        let id = tx.id;
        loop {
            match connector.invoke(0, tx.clone()) {
                Ok(_) => break,
                Err(ConnectorError::Busy) => {
                    let t = connector.now() + cfg.poll_interval;
                    connector.advance_to(t);
                }
                Err(e) => return Err(e.into()),
            }
        }
        queue.insert(id, 0);
    }
    let done = wait_confirmed(
        connector,
        &mut poller,
        &mut queue,
        cfg.poll_interval,
        cfg.setup_timeout,
    )?;
    if let Some((id, _)) = done.iter().find(|(_, ok)| !ok) {
        return Err(DriverError::SetupFailed(*id));
    }
    Ok(contract)
}

struct Context {
    client: usize,
    source: Box<dyn WorkloadConnector>,
    sent: u64,
    next_at: u64,
    interval: f64,
    outstanding: Option<usize>,
    done: bool,
}

/// Run the measured phase against an already prepared contract.
pub fn run_benchmark(
    cfg: &RunConfig,
    connector: &mut dyn BlockchainConnector,
    workload: &dyn Workload,
    contract: ContractId,
) -> MetricsRecord {
    let start = connector.now();
    let end = start + cfg.duration;
    let mut rec = MetricsRecord {
        start_tick: start,
        end_tick: end,
        ..Default::default()
    };
    if let Err(e) = cfg.validate() {
        rec.aborted = Some(e.to_string());
        return rec;
    }
    if cfg.duration == 0 {
        return rec;
    }
    let mut framer = Framer {
        signer: connector.signer(),
        contract,
        gas_limit: cfg.gas_limit,
        nonce: sub_seed(cfg.seed, "run", start) >> 16,
    };
    let threads = cfg.threads_per_client;
    let interval = 1000.0 * threads as f64 / cfg.rate;
    let mut ctxs: Vec<Context> = (0..cfg.clients * threads)
        .map(|i| Context {
            client: i / threads,
            source: workload.client(i, sub_seed(cfg.seed, "client", i as u64)),
            sent: 0,
            next_at: start,
            interval,
            outstanding: None,
            done: false,
        })
        .collect();

    let mut queue = PendingQueue::default();
    let mut poller = Poller::new();
    // Skip blocks confirmed before the run.
    let _ = poller.poll(connector, &mut queue);
    let mut next_poll = start + cfg.poll_interval;

    loop {
        let next_send = ctxs
            .iter()
            .filter(|c| !c.done && c.outstanding.is_none())
            .map(|c| c.next_at)
            .min()
            .unwrap_or(u64::MAX);
        let t = next_send.min(next_poll).min(end);
        if t > connector.now() {
            connector.advance_to(t);
        }
        if t >= end {
            break;
        }
        for c in ctxs.iter_mut() {
            if c.done || c.outstanding.is_some() || c.next_at > t {
                continue;
            }
            let Some(req) = c.source.next_transaction() else {
                c.done = true;
                continue;
            };
            let tx = framer.frame(req);
            let idx = rec.txs.len();
            let mut r = TxRecord {
                id: tx.id,
                submit_tick: t,
                confirm_tick: None,
                status: TxStatus::Pending,
            };
            match connector.invoke(c.client, tx) {
                Ok(id) => {
                    queue.insert(id, idx);
                    if cfg.blocking_mode {
                        c.outstanding = Some(idx);
                    }
                }
                Err(ConnectorError::Unavailable) => {
                    r.status = TxStatus::Rejected;
                    rec.aborted = Some(ConnectorError::Unavailable.to_string());
                }
                Err(_) => r.status = TxStatus::Rejected,
            }
            rec.txs.push(r);
            c.sent += 1;
            c.next_at = start + (c.sent as f64 * c.interval).floor() as u64;
            if cfg.blocking_mode {
                c.next_at = c.next_at.max(t + 1);
            }
        }
        if rec.aborted.is_some() {
            break;
        }
        if t >= next_poll {
            if let Err(e) = poll_into(
                connector,
                &mut poller,
                &mut queue,
                &mut rec,
                &mut ctxs,
                t,
                cfg,
            ) {
                rec.aborted = Some(e.to_string());
                break;
            }
            next_poll += cfg.poll_interval;
        }
    }
    if rec.aborted.is_none() {
        let now = connector.now();
        if let Err(e) = poll_into(
            connector,
            &mut poller,
            &mut queue,
            &mut rec,
            &mut ctxs,
            now,
            cfg,
        ) {
            rec.aborted = Some(e.to_string());
        }
    }
    for (_, idx) in queue.iter() {
        rec.txs[idx].status = TxStatus::Unconfirmed;
    }
    rec
}

fn poll_into(
    connector: &mut dyn BlockchainConnector,
    poller: &mut Poller,
    queue: &mut PendingQueue,
    rec: &mut MetricsRecord,
    ctxs: &mut [Context],
    t: u64,
    cfg: &RunConfig,
) -> Result<(), ConnectorError> {
    let r = poller.poll(connector, queue)?;
    for (id, i) in r.reverted {
        rec.txs[i].confirm_tick = None;
        rec.txs[i].status = TxStatus::Pending;
        queue.insert(id, i);
        rec.reverted += 1;
    }
    for m in r.matched {
        let i = m.record;
        rec.txs[i].confirm_tick = Some(t);
        rec.txs[i].status = if m.ok { TxStatus::Ok } else { TxStatus::Failed };
        if cfg.blocking_mode {
            for c in ctxs.iter_mut() {
                if c.outstanding == Some(i) {
                    c.outstanding = None;
                }
            }
        }
    }
    if cfg.blocking_mode {
        for c in ctxs.iter_mut() {
            if let Some(i) = c.outstanding {
                if t >= rec.txs[i].submit_tick + cfg.tx_timeout {
                    c.outstanding = None;
                }
            }
        }
    }
    rec.queue.push((t, queue.len()));
    rec.blocks.push(BlockSample {
        tick: t,
        height: r.new_h,
        gap: connector.fork_gap(),
    });
    Ok(())
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub struct ProbeSample {
    pub submit_tick: u64,
    /// `None` when the transaction timed out.
    pub latency: Option<u64>,
}

/// Submit `n` transactions one at a time, each after the previous one
/// confirms.
pub fn run_blocking_probe(
    connector: &mut dyn BlockchainConnector,
    workload: &dyn Workload,
    contract: ContractId,
    n: usize,
    cfg: &RunConfig,
) -> Result<Vec<ProbeSample>, DriverError> {
    let mut framer = Framer {
        signer: connector.signer(),
        contract,
        gas_limit: cfg.gas_limit,
        nonce: sub_seed(cfg.seed, "probe", connector.now()) >> 16,
    };
    let mut source = workload.client(0, sub_seed(cfg.seed, "probe", 0));
    let mut poller = Poller::new();
    let mut queue = PendingQueue::default();
    poller.poll(connector, &mut queue)?;
    let mut out = Vec::with_capacity(n);
    for _ in 0..n {
        let Some(req) = source.next_transaction() else {
            break;
        };
        let tx = framer.frame(req);
        let submit = connector.now();
        let id = connector.invoke(0, tx)?;
        queue.insert(id, 0);
        let deadline = submit + cfg.tx_timeout;
        let mut latency = None;
        loop {
            let r = poller.poll(connector, &mut queue)?;
            for (rid, _) in r.reverted {
                if rid == id {
                    queue.insert(id, 0);
                }
            }
            if r.matched.iter().any(|m| m.id == id) {
                latency = Some(connector.now() - submit);
                break;
            }
            let now = connector.now();
            if now >= deadline {
                queue.remove(&id);
                break;
            }
            connector.advance_to((now + cfg.poll_interval).min(deadline));
        }
        out.push(ProbeSample {
            submit_tick: submit,
            latency,
        });
    }
    Ok(out)
}
