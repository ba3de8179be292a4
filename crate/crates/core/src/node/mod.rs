//! A fully validating node: block tree, state, pending pool, and one
//! consensus engine, driven by fabric events and in-process RPC calls.

mod pool;
pub mod rpc;
pub mod wire;

use std::collections::{HashMap, HashSet};
use std::sync::Arc;

use rand::{Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::chain::{
    tx_merkle_root, AppendResult, Block, BlockHeader, BlockTree, Signer, Transaction,
};
use crate::consensus::pbft::{PbftHost, PbftMessage, PbftParams, PbftReplica, PbftTimer};
use crate::consensus::poa::PoaSchedule;
use crate::consensus::pow::{self, RETARGET_WINDOW};
use crate::consensus::{ConsensusConfig, ConsensusKind};
use crate::exec::{
    balance_at, deploy_transaction, execute_tx, ContractId, ContractKind, ExecError, GasSchedule,
    Receipt, Value,
};
use crate::hash::Hash256;
use crate::netsim::{Envelope, Event, Fabric, NodeId};
use crate::state::{CostModel, StateStore, StoreVariant};

pub use pool::Pool;
pub use wire::{NetMessage, WireError};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct NodeConfig {
    pub store: StoreVariant,
    pub gas: GasSchedule,
    /// Blocks below the tip before a block counts as confirmed. Defaults to 5
    /// for PoW and PoA; always 0 for PBFT.
    pub confirmation_length: Option<u64>,
    /// Server-side cap on accepted client transactions per second.
    pub admission_rate: Option<f64>,
    /// Probability of forwarding a client transaction to each peer.
    pub gossip_p: f64,
    /// Processing time charged per executed transaction.
    pub exec_ticks_per_tx: u64,
    pub signer_cost_rounds: u32,
    /// Emulated storage latency in ticks per read and per write.
    pub io: CostModel,
}

impl Default for NodeConfig {
    fn default() -> Self {
        NodeConfig {
            store: StoreVariant::default(),
            gas: GasSchedule::default(),
            confirmation_length: None,
            admission_rate: None,
            gossip_p: 1.0,
            exec_ticks_per_tx: 0,
            signer_cost_rounds: 0,
            io: CostModel::default(),
        }
    }
}

pub const DEFAULT_CONFIRMATION_LENGTH: u64 = 5;

impl NodeConfig {
    pub fn effective_confirmation_length(&self, kind: ConsensusKind) -> u64 {
        match kind {
            ConsensusKind::Pbft => 0,
            _ => self
                .confirmation_length
                .unwrap_or(DEFAULT_CONFIRMATION_LENGTH),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum NodeTimer {
    MineStep { generation: u64 },
    Mined { generation: u64 },
    PoaSlot,
    Pbft(PbftTimer),
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum RpcError {
    #[error("node is busy: admission rate exceeded")]
    Busy,
    #[error("node is down")]
    Down,
    #[error("transaction id does not match its content")]
    BadId,
    #[error("signature does not verify")]
    BadSignature,
    #[error("transaction already known")]
    Duplicate,
    #[error("height {height} above confirmed tip {tip}")]
    AboveTip { height: u64, tip: u64 },
    #[error("not found")]
    NotFound,
    #[error(transparent)]
    Exec(#[from] ExecError),
}

/// A block as clients see it once confirmed.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConfirmedBlockView {
    pub height: u64,
    pub id: Hash256,
    pub tx_ids: Vec<Hash256>,
    /// Per-transaction success flag, aligned with `tx_ids`.
    pub tx_ok: Vec<bool>,
    pub state_root: Hash256,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum BlockRef {
    Height(u64),
    Id(Hash256),
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize)]
pub struct NodeStats {
    pub blocks_produced: u64,
    pub blocks_applied: u64,
    pub reorgs: u64,
    pub max_reorg_depth: u64,
    pub invalid_blocks: u64,
    pub bad_frames: u64,
    pub txs_admitted: u64,
    pub txs_rejected: u64,
}

/// Token bucket over virtual time.
#[derive(Clone, Debug)]
struct TokenBucket {
    per_tick: f64,
    capacity: f64,
    tokens: f64,
    last: u64,
}

impl TokenBucket {
    fn new(per_second: f64) -> Self {
        let capacity = per_second.max(1.0);
        TokenBucket {
            per_tick: per_second / 1000.0,
            capacity,
            tokens: capacity,
            last: 0,
        }
    }

    fn take(&mut self, now: u64) -> bool {
        let dt = now.saturating_sub(self.last) as f64;
        self.last = now;
        self.tokens = (self.tokens + dt * self.per_tick).min(self.capacity);
        if self.tokens >= 1.0 {
            self.tokens -= 1.0;
            true
        } else {
            false
        }
    }
}

#[derive(Debug)]
struct PowState {
    generation: u64,
    template: Option<Block>,
    template_tick: u64,
    template_pool_len: usize,
    next_nonce: u64,
    difficulty: u64,
    found: Option<Block>,
    difficulties: HashMap<Hash256, u64>,
}

#[derive(Debug)]
struct PoaState {
    schedule: PoaSchedule,
    last_slot: Option<u64>,
}

#[derive(Debug)]
enum Engine {
    Pow(PowState),
    Pbft(Option<PbftReplica>),
    Poa(PoaState),
}

/// Side effects a node hands back to its owner besides fabric traffic.
#[derive(Debug, Default)]
pub struct NodeOutput {
    /// Blocks this node produced (PoW/PoA) or committed (PBFT).
    pub blocks: Vec<Arc<Block>>,
}

/// Fabric plus the output sink: everything a node may touch outside itself.
pub struct Io<'a> {
    pub fabric: &'a mut Fabric<NodeTimer>,
    pub out: &'a mut NodeOutput,
}

const SYNC_BATCH: usize = 64;
const SYNC_COOLDOWN: u64 = 50;
const GET_BLOCK_COOLDOWN: u64 = 200;
const TEMPLATE_REFRESH: u64 = 500;

pub struct Node {
    id: NodeId,
    nodes: usize,
    consensus: ConsensusConfig,
    config: NodeConfig,
    confirmation_length: u64,
    tree: BlockTree,
    /// Executed main branch, indexed by height.
    main: Vec<Hash256>,
    main_tx: HashMap<Hash256, u64>,
    invalid: HashSet<Hash256>,
    store: StateStore,
    pool: Pool,
    engine: Engine,
    signer: Signer,
    admission: Option<TokenBucket>,
    busy_until: u64,
    /// Last PBFT view whose leader was sent our pool.
    forwarded_view: u64,
    rng: ChaCha8Rng,
    sync_sent: HashMap<NodeId, u64>,
    block_requests: HashMap<Hash256, u64>,
    stats: NodeStats,
}

impl Node {
    pub fn new(
        id: NodeId,
        nodes: usize,
        consensus: ConsensusConfig,
        config: NodeConfig,
        seed: u64,
    ) -> Self {
        let mut rng =
            ChaCha8Rng::seed_from_u64(seed ^ (id as u64).wrapping_mul(0x9e37_79b9_7f4a_7c15));
        let engine = match consensus.kind {
            ConsensusKind::Pow => Engine::Pow(PowState {
                generation: 0,
                template: None,
                template_tick: 0,
                template_pool_len: 0,
                next_nonce: rng.next_u64(),
                difficulty: consensus.difficulty,
                found: None,
                difficulties: HashMap::new(),
            }),
            ConsensusKind::Pbft => Engine::Pbft(Some(PbftReplica::new(
                id,
                PbftParams {
                    nodes,
                    batch_size: consensus.batch_size,
                    batch_timeout: consensus.batch_timeout,
                    view_timeout: consensus.view_timeout,
                    strict_quorum: consensus.strict_quorum,
                },
            ))),
            ConsensusKind::Poa => Engine::Poa(PoaState {
                schedule: PoaSchedule::new(
                    consensus.authority_list(nodes),
                    consensus.step_duration,
                ),
                last_slot: None,
            }),
        };
        let genesis = Block::genesis();
        let tree = BlockTree::new(genesis);
        let main = vec![tree.genesis()];
        Node {
            id,
            nodes,
            confirmation_length: config.effective_confirmation_length(consensus.kind),
            admission: config.admission_rate.map(TokenBucket::new),
            signer: Signer {
                cost_rounds: config.signer_cost_rounds,
            },
            store: StateStore::new(config.store).with_cost(config.io),
            consensus,
            config,
            tree,
            main,
            main_tx: HashMap::new(),
            invalid: HashSet::new(),
            pool: Pool::default(),
            engine,
            busy_until: 0,
            forwarded_view: 0,
            rng,
            sync_sent: HashMap::new(),
            block_requests: HashMap::new(),
            stats: NodeStats::default(),
        }
    }

    pub fn id(&self) -> NodeId {
        self.id
    }

    pub fn kind(&self) -> ConsensusKind {
        self.consensus.kind
    }

    pub fn stats(&self) -> NodeStats {
        self.stats
    }

    pub fn tree(&self) -> &BlockTree {
        &self.tree
    }

    pub fn store(&self) -> &StateStore {
        &self.store
    }

    pub fn pool_len(&self) -> usize {
        self.pool.len()
    }

    pub fn head(&self) -> Hash256 {
        *self.main.last().expect("genesis")
    }

    pub fn head_height(&self) -> u64 {
        (self.main.len() - 1) as u64
    }

    pub fn state_root(&mut self) -> Hash256 {
        self.store.root()
    }

    pub fn main_branch(&self) -> &[Hash256] {
        &self.main
    }

    pub fn confirmed_height(&self) -> u64 {
        self.head_height().saturating_sub(self.confirmation_length)
    }

    pub fn pbft(&self) -> Option<&PbftReplica> {
        match &self.engine {
            Engine::Pbft(r) => r.as_ref(),
            _ => None,
        }
    }

    /// Current PoW difficulty for the next block on our head.
    pub fn pow_difficulty(&self) -> Option<u64> {
        match &self.engine {
            Engine::Pow(p) => Some(p.difficulty),
            _ => None,
        }
    }

    // ---- lifecycle ----------------------------------------------------------

    pub fn start(&mut self, io: &mut Io<'_>) {
        match &self.engine {
            Engine::Pow(_) => self.new_mining_epoch(io),
            Engine::Poa(p) => {
                let now = io.fabric.now();
                let at = if now.is_multiple_of(p.schedule.step()) {
                    0
                } else {
                    p.schedule.next_slot_start(now) - now
                };
                io.fabric.schedule_timer(self.id, at, NodeTimer::PoaSlot);
            }
            Engine::Pbft(_) => self.with_pbft(io, |r, h| r.start(h)),
        }
    }

    pub fn on_event(&mut self, io: &mut Io<'_>, event: Event<NodeTimer>) {
        match event {
            Event::Deliver(env) => self.on_deliver(io, env),
            Event::Timer { timer, .. } => self.on_timer(io, timer),
        }
    }

    fn on_timer(&mut self, io: &mut Io<'_>, timer: NodeTimer) {
        match timer {
            NodeTimer::MineStep { generation } => self.mine_step(io, generation),
            NodeTimer::Mined { generation } => self.publish_mined(io, generation),
            NodeTimer::PoaSlot => self.poa_slot(io),
            NodeTimer::Pbft(t) => self.with_pbft(io, |r, h| r.on_timer(h, t)),
        }
    }

    fn on_deliver(&mut self, io: &mut Io<'_>, env: Envelope) {
        let msg = match NetMessage::decode(&env.payload, env.from) {
            Ok(m) => m,
            Err(_) => {
                self.stats.bad_frames += 1;
                return;
            }
        };
        match msg {
            NetMessage::Tx(tx) => {
                if self.admit(&tx).is_ok() {
                    self.pool.insert(tx);
                    self.notify_pool(io);
                }
            }
            NetMessage::Block(b) => self.on_block(io, b, env.from),
            NetMessage::GetBlock(id) => {
                if let Some(b) = self.tree.get(&id).cloned() {
                    self.send(io, env.from, &NetMessage::Block(b));
                }
            }
            NetMessage::Pbft(m) => self.with_pbft(io, |r, h| r.on_message(h, m)),
            NetMessage::SyncRequest { from_height } => {
                let start = from_height.max(1) as usize;
                let end = self.main.len().min(start + SYNC_BATCH);
                if start < end {
                    let blocks = self.main[start..end]
                        .iter()
                        .map(|id| self.tree.get(id).expect("main block").clone())
                        .collect();
                    self.send(io, env.from, &NetMessage::SyncResponse { blocks });
                }
            }
            NetMessage::SyncResponse { blocks } => self.on_sync_response(io, blocks, env.from),
        }
    }

    // ---- messaging ------------------------------------------------------------

    fn send_delay(&self, now: u64) -> u64 {
        self.busy_until.saturating_sub(now)
    }

    fn send(&self, io: &mut Io<'_>, to: NodeId, msg: &NetMessage) {
        let delay = self.send_delay(io.fabric.now());
        io.fabric.send(self.id, to, msg.encode(self.id), delay);
    }

    fn broadcast(&self, io: &mut Io<'_>, msg: &NetMessage) {
        let delay = self.send_delay(io.fabric.now());
        io.fabric.broadcast(self.id, msg.encode(self.id), delay);
    }

    fn charge_busy(&mut self, now: u64, txs: usize) {
        let work = txs as u64 * self.config.exec_ticks_per_tx + self.store.take_io_ticks();
        if work > 0 {
            self.busy_until = self.busy_until.max(now) + work;
        }
    }

    // ---- transactions -----------------------------------------------------------

    fn admit(&self, tx: &Transaction) -> Result<(), RpcError> {
        if self.pool.contains(&tx.id) || self.main_tx.contains_key(&tx.id) {
            return Err(RpcError::Duplicate);
        }
        if !tx.id_is_valid() {
            return Err(RpcError::BadId);
        }
        if !self.signer.verify(tx) {
            return Err(RpcError::BadSignature);
        }
        Ok(())
    }

    /// Accept a client transaction into the pool and gossip it.
    pub fn rpc_invoke(&mut self, io: &mut Io<'_>, tx: Transaction) -> Result<Hash256, RpcError> {
        if io.fabric.is_crashed(self.id) {
            return Err(RpcError::Down);
        }
        if let Err(e) = self.admit(&tx) {
            self.stats.txs_rejected += 1;
            return Err(e);
        }
        let now = io.fabric.now();
        if let Some(bucket) = self.admission.as_mut() {
            if !bucket.take(now) {
                self.stats.txs_rejected += 1;
                return Err(RpcError::Busy);
            }
        }
        self.stats.txs_admitted += 1;
        let id = tx.id;
        let leader = self.pbft().map(|r| r.leader());
        let msg = NetMessage::Tx(tx.clone());
        let frame = msg.encode(self.id);
        let digest = crate::hash::sha256(&frame);
        let delay = self.send_delay(now);
        for peer in 0..self.nodes {
            if peer == self.id {
                continue;
            }
            let gossip =
                self.config.gossip_p >= 1.0 || self.rng.gen_bool(self.config.gossip_p.max(0.0));
            if gossip || Some(peer) == leader {
                io.fabric
                    .send_with_digest(self.id, peer, frame.clone(), digest, delay);
            }
        }
        self.pool.insert(tx);
        self.notify_pool(io);
        Ok(id)
    }

    pub fn rpc_deploy(
        &mut self,
        io: &mut Io<'_>,
        deployer: crate::chain::AccountId,
        nonce: u64,
        code_name: &str,
        init_args: Vec<Value>,
        gas_limit: u64,
    ) -> Result<ContractId, RpcError> {
        let code: ContractKind = code_name.parse()?;
        let tx = deploy_transaction(deployer, nonce, code, init_args, gas_limit);
        let contract = tx.contract;
        self.rpc_invoke(io, tx)?;
        Ok(contract)
    }

    fn notify_pool(&mut self, io: &mut Io<'_>) {
        if matches!(self.engine, Engine::Pbft(_)) {
            self.with_pbft(io, |r, h| r.on_pool_change(h));
        }
    }

    // ---- RPC reads -------------------------------------------------------------

    fn view_of(&self, height: u64) -> ConfirmedBlockView {
        let id = self.main[height as usize];
        let b = self.tree.get(&id).expect("main block");
        ConfirmedBlockView {
            height,
            id,
            tx_ids: b.transactions.iter().map(|t| t.id).collect(),
            tx_ok: b.receipts.iter().map(Receipt::is_ok).collect(),
            state_root: b.header.state_root,
        }
    }

    /// Confirmed blocks above `h`, ascending.
    pub fn rpc_get_latest_blocks(&self, h: u64) -> Vec<ConfirmedBlockView> {
        let tip = self.confirmed_height();
        (h + 1..=tip).map(|x| self.view_of(x)).collect()
    }

    pub fn rpc_get_block(&self, r: BlockRef) -> Result<Arc<Block>, RpcError> {
        let id = match r {
            BlockRef::Height(h) => *self.main.get(h as usize).ok_or(RpcError::NotFound)?,
            BlockRef::Id(id) => id,
        };
        self.tree.get(&id).cloned().ok_or(RpcError::NotFound)
    }

    /// Main-branch block id at `height`, confirmed or not.
    pub fn block_id_at(&self, height: u64) -> Option<Hash256> {
        self.main.get(height as usize).copied()
    }

    pub fn rpc_get_balance_at(
        &self,
        contract: &ContractId,
        account: u64,
        height: u64,
    ) -> Result<Option<u64>, RpcError> {
        let tip = self.confirmed_height();
        if height > tip {
            return Err(RpcError::AboveTip { height, tip });
        }
        Ok(balance_at(&self.store, contract, account, height))
    }

    pub fn rpc_query(
        &self,
        contract: &ContractId,
        function: &str,
        args: &[Value],
    ) -> Result<Value, RpcError> {
        Ok(crate::exec::query(
            &self.store,
            contract,
            function,
            args,
            self.head_height(),
        )?)
    }

    // ---- block assembly and execution ---------------------------------------------

    /// Pending transactions in FIFO order within the block caps.
    fn select_batch(&self) -> Vec<Transaction> {
        let mut out = Vec::new();
        let mut gas: u64 = 0;
        for tx in self.pool.iter() {
            if out.len() >= self.consensus.batch_size {
                break;
            }
            if self.main_tx.contains_key(&tx.id) {
                continue;
            }
            let next = gas.saturating_add(tx.gas_limit);
            if next > self.consensus.max_block_gas {
                if out.is_empty() {
                    continue;
                }
                break;
            }
            gas = next;
            out.push(tx.clone());
        }
        out
    }

    /// Build a block on the head, executing and then reverting it so the
    /// header can carry the resulting state root.
    fn build_on_head(&mut self, now: u64, txs: Vec<Transaction>) -> Block {
        let parent_height = self.head_height();
        let height = parent_height + 1;
        let receipts: Vec<Receipt> = txs
            .iter()
            .map(|tx| execute_tx(&mut self.store, tx, &self.config.gas, height))
            .collect();
        let state_root = self.store.root();
        self.store.revert_above(parent_height);
        self.charge_busy(now, txs.len());
        Block {
            header: BlockHeader {
                parent: self.head(),
                height,
                tx_root: tx_merkle_root(&txs),
                state_root,
                proposer: self.id as u64,
                nonce: 0,
                timestamp: now,
            },
            transactions: txs,
            receipts,
        }
    }

    /// Execute `block` on the head. Leaves the state applied on success and
    /// restored on failure.
    fn execute_on_head(&mut self, block: &Block, now: u64) -> bool {
        let parent_height = self.head_height();
        if block.header.parent != self.head()
            || block.height() != parent_height + 1
            || !block.is_well_formed()
        {
            return false;
        }
        let mut seen = HashSet::with_capacity(block.transactions.len());
        for tx in &block.transactions {
            if self.main_tx.contains_key(&tx.id) || !seen.insert(tx.id) {
                return false;
            }
            if !self.pool.contains(&tx.id) && (!tx.id_is_valid() || !self.signer.verify(tx)) {
                return false;
            }
        }
        let height = block.height();
        let mut ok = true;
        for (tx, expected) in block.transactions.iter().zip(&block.receipts) {
            let r = execute_tx(&mut self.store, tx, &self.config.gas, height);
            if &r != expected {
                ok = false;
                break;
            }
        }
        ok = ok && self.store.root() == block.header.state_root;
        self.charge_busy(now, block.transactions.len());
        if !ok {
            self.store.revert_above(parent_height);
        }
        ok
    }

    fn validate_on_head(&mut self, block: &Block, now: u64) -> bool {
        let parent_height = self.head_height();
        let ok = self.execute_on_head(block, now);
        if ok {
            self.store.revert_above(parent_height);
        }
        ok
    }

    /// Record an executed block as the new head.
    fn push_main(&mut self, block: &Block) {
        self.main.push(block.id());
        for tx in &block.transactions {
            self.main_tx.insert(tx.id, block.height());
            self.pool.remove(&tx.id);
        }
        self.stats.blocks_applied += 1;
    }

    /// Move the executed head to the fork-choice tip, unwinding and
    /// re-executing as needed. Transactions from abandoned blocks go back
    /// to the pool.
    fn update_head(&mut self, io: &mut Io<'_>) -> bool {
        let desired = self.tree.fork_choice(self.consensus.fork_rule);
        let head = self.head();
        if desired == head {
            return false;
        }
        let Some(ancestor) = self.tree.common_ancestor(&head, &desired) else {
            return false;
        };
        let anc_height = self.tree.height_of(&ancestor).expect("known");
        let mut path = Vec::new();
        let mut cur = desired;
        while cur != ancestor {
            if self.invalid.contains(&cur) {
                return false;
            }
            let b = self.tree.get(&cur).expect("known").clone();
            cur = b.header.parent;
            path.push(b);
        }
        path.reverse();

        let mut abandoned = Vec::new();
        let depth = self.head_height() - anc_height;
        if depth > 0 {
            self.stats.reorgs += 1;
            self.stats.max_reorg_depth = self.stats.max_reorg_depth.max(depth);
            for id in self.main.drain(anc_height as usize + 1..) {
                let b = self.tree.get(&id).expect("main block").clone();
                for tx in &b.transactions {
                    self.main_tx.remove(&tx.id);
                }
                abandoned.push(b);
            }
            self.store.revert_above(anc_height);
        }
        let now = io.fabric.now();
        for b in &path {
            if !self.execute_on_head(b, now) {
                self.stats.invalid_blocks += 1;
                self.invalid.insert(b.id());
                break;
            }
            self.push_main(b);
        }
        for b in abandoned {
            for tx in &b.transactions {
                if !self.main_tx.contains_key(&tx.id) {
                    self.pool.insert(tx.clone());
                }
            }
        }
        self.head() != head
    }

    fn seal_ok(&mut self, block: &Block, now: u64) -> bool {
        let Some(parent) = self.tree.get(&block.header.parent).cloned() else {
            return false;
        };
        match &self.engine {
            Engine::Pow(_) => {
                let d = self.difficulty_for_child(&parent);
                pow::pow_verify(&block.header, d)
            }
            Engine::Poa(p) => p.schedule.validate(&block.header, &parent.header, now),
            Engine::Pbft(_) => true,
        }
    }

    fn on_block(&mut self, io: &mut Io<'_>, block: Arc<Block>, from: NodeId) {
        if matches!(self.engine, Engine::Pbft(_)) {
            return;
        }
        let id = block.id();
        if self.tree.contains(&id) || self.invalid.contains(&id) {
            return;
        }
        let parent = block.header.parent;
        let now = io.fabric.now();
        match self.tree.append_arc(block) {
            Ok(AppendResult::Accepted { inserted }) => {
                for bid in inserted {
                    let b = self.tree.get(&bid).expect("inserted").clone();
                    if !self.seal_ok(&b, now) {
                        self.stats.invalid_blocks += 1;
                        self.invalid.insert(bid);
                    }
                }
                if self.update_head(io) {
                    self.on_head_changed(io);
                }
            }
            Ok(AppendResult::Orphaned) => {
                let last = self.block_requests.get(&parent).copied();
                if last.is_none_or(|t| now >= t + GET_BLOCK_COOLDOWN) {
                    self.block_requests.insert(parent, now);
                    self.send(io, from, &NetMessage::GetBlock(parent));
                }
            }
            Ok(AppendResult::Duplicate) => {}
            Err(_) => self.stats.invalid_blocks += 1,
        }
    }

    /// Produced locally: insert, adopt, announce.
    fn publish(&mut self, io: &mut Io<'_>, block: Block) {
        let block = Arc::new(block);
        self.stats.blocks_produced += 1;
        if self.tree.append_arc(block.clone()).is_err() {
            return;
        }
        io.out.blocks.push(block.clone());
        self.broadcast(io, &NetMessage::Block(block));
        if self.update_head(io) {
            self.on_head_changed(io);
        }
    }

    fn on_head_changed(&mut self, io: &mut Io<'_>) {
        if matches!(self.engine, Engine::Pow(_)) {
            self.new_mining_epoch(io);
        }
    }

    // ---- PoW -----------------------------------------------------------------

    /// Difficulty required of a child of `parent`, memoized per parent.
    fn difficulty_for_child(&mut self, parent: &Block) -> u64 {
        let base = self.consensus.difficulty;
        if !self.consensus.retarget {
            return base;
        }
        let Engine::Pow(p) = &self.engine else {
            return 1;
        };
        if let Some(d) = p.difficulties.get(&parent.id()) {
            return *d;
        }
        // Walk back to genesis or to a block whose own difficulty is known.
        let mut stack = vec![parent.clone()];
        loop {
            let last = stack.last().expect("non-empty");
            if last.height() == 0 || p.difficulties.contains_key(&last.header.parent) {
                break;
            }
            match self.tree.get(&last.header.parent) {
                Some(b) => stack.push(b.as_ref().clone()),
                None => break,
            }
        }
        let target = self.consensus.target_interval;
        let mut computed: Vec<(Hash256, u64)> = Vec::with_capacity(stack.len());
        for b in stack.iter().rev() {
            let own = if b.height() == 0 {
                base
            } else {
                computed
                    .last()
                    .map(|(_, d)| *d)
                    .or_else(|| p.difficulties.get(&b.header.parent).copied())
                    .unwrap_or(base)
            };
            let ts = self.ancestor_timestamps(b, RETARGET_WINDOW + 1);
            computed.push((
                b.id(),
                pow::next_difficulty(own, b.height() + 1, &ts, target),
            ));
        }
        let d = computed.last().expect("non-empty").1;
        if let Engine::Pow(p) = &mut self.engine {
            p.difficulties.extend(computed);
        }
        d
    }

    /// Timestamps of up to `n` blocks ending at `tip`, oldest first.
    fn ancestor_timestamps(&self, tip: &Block, n: usize) -> Vec<u64> {
        let mut out = vec![tip.header.timestamp];
        let mut parent = tip.header.parent;
        let mut height = tip.height();
        while out.len() < n && height > 0 {
            let Some(b) = self.tree.get(&parent) else {
                break;
            };
            out.push(b.header.timestamp);
            parent = b.header.parent;
            height = b.height();
        }
        out.reverse();
        out
    }

    fn new_mining_epoch(&mut self, io: &mut Io<'_>) {
        let head = self.tree.get(&self.head()).expect("head").clone();
        let difficulty = self.difficulty_for_child(&head);
        let now = io.fabric.now();
        let txs = self.select_batch();
        let pool_len = self.pool.len();
        let template = self.build_on_head(now, txs);
        let Engine::Pow(p) = &mut self.engine else {
            return;
        };
        p.generation += 1;
        p.difficulty = difficulty;
        p.template = Some(template);
        p.template_tick = now;
        p.template_pool_len = pool_len;
        p.found = None;
        let generation = p.generation;
        io.fabric
            .schedule_timer(self.id, 0, NodeTimer::MineStep { generation });
    }

    fn mine_step(&mut self, io: &mut Io<'_>, generation: u64) {
        let now = io.fabric.now();
        let refresh = match &self.engine {
            Engine::Pow(p) => {
                if p.generation != generation {
                    return;
                }
                let stale = now >= p.template_tick + TEMPLATE_REFRESH;
                let full = p
                    .template
                    .as_ref()
                    .is_some_and(|t| t.transactions.len() >= self.consensus.batch_size);
                stale && !full && self.pool.len() != p.template_pool_len
            }
            _ => return,
        };
        if refresh {
            // Same parent, fresher transactions; keep the nonce counter.
            let txs = self.select_batch();
            let pool_len = self.pool.len();
            let t = self.build_on_head(now, txs);
            if let Engine::Pow(p) = &mut self.engine {
                p.template = Some(t);
                p.template_tick = now;
                p.template_pool_len = pool_len;
            }
        }
        let rate = self.consensus.attempts_per_tick;
        let window = self.consensus.mine_window;
        let id = self.id;
        let Engine::Pow(p) = &mut self.engine else {
            return;
        };
        let Some(template) = p.template.as_mut() else {
            return;
        };
        let budget = rate.saturating_mul(window);
        match pow::mine_header(&mut template.header, p.difficulty, p.next_nonce, budget) {
            Some(used) => {
                p.next_nonce = p.next_nonce.wrapping_add(used);
                p.found = Some(template.clone());
                let at = used.div_ceil(rate).saturating_sub(1);
                io.fabric
                    .schedule_timer(id, at, NodeTimer::Mined { generation });
            }
            None => {
                p.next_nonce = p.next_nonce.wrapping_add(budget);
                io.fabric
                    .schedule_timer(id, window, NodeTimer::MineStep { generation });
            }
        }
    }

    fn publish_mined(&mut self, io: &mut Io<'_>, generation: u64) {
        let found = match &mut self.engine {
            Engine::Pow(p) if p.generation == generation => p.found.take(),
            _ => None,
        };
        let Some(block) = found else {
            return;
        };
        self.publish(io, block);
        if let Engine::Pow(p) = &self.engine {
            if p.generation == generation {
                // Head did not move (should not happen for a valid block);
                // keep mining on the same parent.
                self.new_mining_epoch(io);
            }
        }
    }

    // ---- PoA -----------------------------------------------------------------

    fn poa_slot(&mut self, io: &mut Io<'_>) {
        let now = io.fabric.now();
        let Engine::Poa(p) = &self.engine else {
            return;
        };
        let next = p.schedule.next_slot_start(now) - now;
        let slot = p.schedule.may_produce(self.id, now, p.last_slot);
        io.fabric.schedule_timer(self.id, next, NodeTimer::PoaSlot);
        let Some(slot) = slot else {
            return;
        };
        if let Engine::Poa(p) = &mut self.engine {
            p.last_slot = Some(slot);
        }
        let txs = self.select_batch();
        let block = self.build_on_head(now, txs);
        self.publish(io, block);
    }

    // ---- PBFT ----------------------------------------------------------------

    fn with_pbft(&mut self, io: &mut Io<'_>, f: impl FnOnce(&mut PbftReplica, &mut dyn PbftHost)) {
        let Engine::Pbft(slot) = &mut self.engine else {
            return;
        };
        let Some(mut replica) = slot.take() else {
            return;
        };
        {
            let mut host = PbftCtx { node: self, io };
            f(&mut replica, &mut host);
        }
        let installed = (!replica.in_view_change() && replica.view() != self.forwarded_view)
            .then(|| (replica.view(), replica.leader()));
        if let Engine::Pbft(slot) = &mut self.engine {
            *slot = Some(replica);
        }
        if let Some((view, leader)) = installed {
            self.forwarded_view = view;
            if leader != self.id {
                self.forward_pool(io, leader);
            }
        }
    }

    /// Hand pending transactions to a new primary, which may never have seen
    /// the ones that arrived while it was unreachable.
    fn forward_pool(&self, io: &mut Io<'_>, leader: NodeId) {
        let delay = self.send_delay(io.fabric.now());
        for tx in self.pool.iter() {
            io.fabric.send(
                self.id,
                leader,
                NetMessage::Tx(tx.clone()).encode(self.id),
                delay,
            );
        }
    }

    fn commit_pbft(&mut self, io: &mut Io<'_>, block: Arc<Block>) -> bool {
        let now = io.fabric.now();
        if !self.execute_on_head(&block, now) {
            self.stats.invalid_blocks += 1;
            return false;
        }
        if !matches!(
            self.tree.append_arc(block.clone()),
            Ok(AppendResult::Accepted { .. })
        ) {
            // Already known; roll back to keep state and main aligned.
            self.store.revert_above(self.head_height());
            return false;
        }
        self.push_main(&block);
        io.out.blocks.push(block);
        true
    }

    fn on_sync_response(&mut self, io: &mut Io<'_>, blocks: Vec<Arc<Block>>, from: NodeId) {
        if !matches!(self.engine, Engine::Pbft(_)) {
            for b in blocks {
                self.on_block(io, b, from);
            }
            return;
        }
        let mut progressed = false;
        for b in blocks {
            if b.height() != self.head_height() + 1 || b.header.parent != self.head() {
                continue;
            }
            if !self.commit_pbft(io, b) {
                break;
            }
            progressed = true;
        }
        if progressed {
            self.sync_sent.remove(&from);
            self.with_pbft(io, |r, h| r.after_commit(h));
        }
    }

    fn request_sync(&mut self, io: &mut Io<'_>, peer: NodeId) {
        let now = io.fabric.now();
        if self
            .sync_sent
            .get(&peer)
            .is_some_and(|t| now < t + SYNC_COOLDOWN)
        {
            return;
        }
        self.sync_sent.insert(peer, now);
        let from_height = self.head_height() + 1;
        self.send(io, peer, &NetMessage::SyncRequest { from_height });
    }
}

struct PbftCtx<'a, 'b> {
    node: &'a mut Node,
    io: &'a mut Io<'b>,
}

impl PbftHost for PbftCtx<'_, '_> {
    fn broadcast(&mut self, msg: PbftMessage) {
        self.node.broadcast(self.io, &NetMessage::Pbft(msg));
    }

    fn send(&mut self, to: NodeId, msg: PbftMessage) {
        self.node.send(self.io, to, &NetMessage::Pbft(msg));
    }

    fn set_timer(&mut self, after: u64, timer: PbftTimer) {
        self.io
            .fabric
            .schedule_timer(self.node.id, after, NodeTimer::Pbft(timer));
    }

    fn committed_tip(&self) -> (u64, Hash256) {
        (self.node.head_height(), self.node.head())
    }

    fn pool_len(&self) -> usize {
        self.node.pool.len()
    }

    fn build_block(&mut self) -> Option<Block> {
        let txs = self.node.select_batch();
        if txs.is_empty() {
            return None;
        }
        let now = self.io.fabric.now();
        Some(self.node.build_on_head(now, txs))
    }

    fn validate_block(&mut self, block: &Block) -> bool {
        let now = self.io.fabric.now();
        self.node.validate_on_head(block, now)
    }

    fn commit_block(&mut self, block: Arc<Block>) {
        self.node.commit_pbft(self.io, block);
    }

    fn request_sync(&mut self, peer: NodeId) {
        self.node.request_sync(self.io, peer);
    }
}
