//! A simulated network of nodes sharing one fabric, plus an omniscient
//! block tree used for fork accounting.

use std::sync::Arc;
use std::time::{Duration, Instant};

use thiserror::Error;

use crate::chain::{Block, BlockTree, ForkGap, Signer, Transaction};
use crate::consensus::{ConfigError, ConsensusConfig, ConsensusKind};
use crate::driver::{BlockchainConnector, ConnectorError};
use crate::exec::{ContractId, Value};
use crate::hash::Hash256;
use crate::netsim::{Event, Fabric, FaultPolicy, NetConfig, NetError, NodeId, TraceRecorder};
use crate::node::{
    BlockRef, ConfirmedBlockView, Io, Node, NodeConfig, NodeOutput, NodeTimer, RpcError,
};

#[derive(Debug, Error)]
pub enum ClusterError {
    #[error("at least one node is required")]
    NoNodes,
    #[error(transparent)]
    Consensus(#[from] ConfigError),
    #[error(transparent)]
    Net(#[from] NetError),
}

#[derive(Clone, Debug)]
pub struct ClusterConfig {
    pub nodes: usize,
    pub consensus: ConsensusConfig,
    pub node: NodeConfig,
    pub network: NetConfig,
    pub faults: FaultPolicy,
    pub seed: u64,
}

pub struct Cluster {
    fabric: Fabric<NodeTimer>,
    nodes: Vec<Node>,
    global: BlockTree,
    consensus: ConsensusConfig,
    signer: Signer,
    out: NodeOutput,
    /// Real-time origin when pacing virtual ticks against the wall clock.
    wall_origin: Option<(Instant, u64)>,
    deploy_nonce: u64,
}

/// Gas limit attached to deploy transactions.
pub const DEPLOY_GAS: u64 = 1_000_000_000;

/// Account that deploys contracts on behalf of the benchmark driver.
pub const DEPLOYER: crate::chain::AccountId = crate::chain::AccountId(u64::MAX);

impl Cluster {
    pub fn new(cfg: ClusterConfig) -> Result<Self, ClusterError> {
        if cfg.nodes == 0 {
            return Err(ClusterError::NoNodes);
        }
        cfg.consensus.validate(cfg.nodes)?;
        let fabric = Fabric::new(cfg.nodes, cfg.network, cfg.seed).with_policy(cfg.faults)?;
        let nodes = (0..cfg.nodes)
            .map(|i| {
                Node::new(
                    i,
                    cfg.nodes,
                    cfg.consensus.clone(),
                    cfg.node.clone(),
                    cfg.seed,
                )
            })
            .collect();
        let mut c = Cluster {
            fabric,
            nodes,
            global: BlockTree::new(Block::genesis()),
            signer: Signer {
                cost_rounds: cfg.node.signer_cost_rounds,
            },
            consensus: cfg.consensus,
            out: NodeOutput::default(),
            wall_origin: None,
            deploy_nonce: 0,
        };
        for i in 0..c.nodes.len() {
            c.with_node(i, |n, io| n.start(io));
        }
        Ok(c)
    }

    pub fn set_trace(&mut self, trace: TraceRecorder) {
        self.fabric.set_trace(trace);
    }

    /// Pace event processing so one tick takes one real millisecond.
    pub fn set_wall_clock(&mut self, on: bool) {
        self.wall_origin = on.then(|| (Instant::now(), self.fabric.now()));
    }

    pub fn fabric(&self) -> &Fabric<NodeTimer> {
        &self.fabric
    }

    pub fn fabric_mut(&mut self) -> &mut Fabric<NodeTimer> {
        &mut self.fabric
    }

    pub fn nodes(&self) -> &[Node] {
        &self.nodes
    }

    pub fn node(&self, i: NodeId) -> &Node {
        &self.nodes[i]
    }

    pub fn kind(&self) -> ConsensusKind {
        self.consensus.kind
    }

    pub fn signer(&self) -> Signer {
        self.signer
    }

    /// Every block produced (PoW/PoA) or committed (PBFT) by any node.
    pub fn global_tree(&self) -> &BlockTree {
        &self.global
    }

    pub fn fork_gap(&self) -> ForkGap {
        self.global.fork_gap(self.consensus.fork_rule)
    }

    pub fn now(&self) -> u64 {
        self.fabric.now()
    }

    pub fn is_live(&self, i: NodeId) -> bool {
        !self.fabric.is_crashed(i)
    }

    /// Node serving client `client`: the client's home node, or the next live
    /// one if it is down.
    pub fn node_for_client(&self, client: usize) -> Option<NodeId> {
        let n = self.nodes.len();
        (0..n).map(|k| (client + k) % n).find(|&i| self.is_live(i))
    }

    /// Node answering ledger reads.
    pub fn observer(&self) -> Option<NodeId> {
        self.node_for_client(0)
    }

    pub fn with_node<R>(&mut self, i: NodeId, f: impl FnOnce(&mut Node, &mut Io<'_>) -> R) -> R {
        let r = {
            let mut io = Io {
                fabric: &mut self.fabric,
                out: &mut self.out,
            };
            f(&mut self.nodes[i], &mut io)
        };
        self.absorb_output();
        r
    }

    fn absorb_output(&mut self) {
        for b in self.out.blocks.drain(..) {
            let _ = self.global.append_arc(b);
        }
    }

    fn pace(&self, tick: u64) {
        if let Some((origin, base)) = self.wall_origin {
            let due = origin + Duration::from_millis(tick.saturating_sub(base));
            let now = Instant::now();
            if due > now {
                std::thread::sleep(due - now);
            }
        }
    }

    /// Process every event up to and including `until`.
    pub fn run_until(&mut self, until: u64) {
        while let Some(ev) = self.fabric.next_event(until) {
            self.pace(self.fabric.now());
            let target = match &ev {
                Event::Deliver(env) => env.to,
                Event::Timer { owner, .. } => *owner,
            };
            self.with_node(target, |n, io| n.on_event(io, ev));
        }
        self.pace(until);
    }

    pub fn invoke(&mut self, client: usize, tx: Transaction) -> Result<Hash256, RpcError> {
        let i = self.node_for_client(client).ok_or(RpcError::Down)?;
        self.with_node(i, |n, io| n.rpc_invoke(io, tx))
    }

    pub fn deploy(
        &mut self,
        client: usize,
        code: &str,
        init_args: Vec<Value>,
    ) -> Result<(ContractId, Hash256), RpcError> {
        let kind = code.parse()?;
        let nonce = self.deploy_nonce;
        self.deploy_nonce += 1;
        let tx = crate::exec::deploy_transaction(DEPLOYER, nonce, kind, init_args, DEPLOY_GAS);
        let contract = tx.contract;
        let id = self.invoke(client, tx)?;
        Ok((contract, id))
    }

    /// True once every live node agrees on the main branch and state root.
    pub fn converged(&mut self) -> bool {
        let live: Vec<NodeId> = (0..self.nodes.len()).filter(|&i| self.is_live(i)).collect();
        let Some((&first, rest)) = live.split_first() else {
            return true;
        };
        let head = self.nodes[first].head();
        let root = self.nodes[first].state_root();
        rest.iter().all(|&i| {
            let n = &mut self.nodes[i];
            n.head() == head && n.state_root() == root
        })
    }

    pub fn blocks_on_main(&self, node: NodeId) -> Vec<Arc<Block>> {
        let n = &self.nodes[node];
        n.main_branch()
            .iter()
            .map(|id| n.tree().get(id).expect("main block").clone())
            .collect()
    }
}

fn rpc_err(e: RpcError) -> ConnectorError {
    match e {
        RpcError::Busy => ConnectorError::Busy,
        other => ConnectorError::Rpc(other.to_string()),
    }
}

impl BlockchainConnector for Cluster {
    fn signer(&self) -> Signer {
        self.signer
    }

    fn deploy(
        &mut self,
        code: &str,
        init_args: Vec<Value>,
    ) -> Result<(ContractId, Hash256), ConnectorError> {
        Cluster::deploy(self, 0, code, init_args).map_err(rpc_err)
    }

    fn invoke(&mut self, client: usize, tx: Transaction) -> Result<Hash256, ConnectorError> {
        Cluster::invoke(self, client, tx).map_err(rpc_err)
    }

    fn query(
        &mut self,
        contract: &ContractId,
        function: &str,
        args: &[Value],
    ) -> Result<Value, ConnectorError> {
        let i = self.observer().ok_or(ConnectorError::Unavailable)?;
        self.nodes[i]
            .rpc_query(contract, function, args)
            .map_err(rpc_err)
    }

    fn get_latest_blocks(&mut self, h: u64) -> Result<Vec<ConfirmedBlockView>, ConnectorError> {
        let i = self.observer().ok_or(ConnectorError::Unavailable)?;
        Ok(self.nodes[i].rpc_get_latest_blocks(h))
    }

    fn get_block(&mut self, r: BlockRef) -> Result<Arc<Block>, ConnectorError> {
        let i = self.observer().ok_or(ConnectorError::Unavailable)?;
        self.nodes[i].rpc_get_block(r).map_err(rpc_err)
    }

    fn block_id_at(&mut self, height: u64) -> Option<Hash256> {
        let i = self.observer()?;
        self.nodes[i].block_id_at(height)
    }

    fn now(&self) -> u64 {
        self.fabric.now()
    }

    fn advance_to(&mut self, tick: u64) {
        self.run_until(tick);
    }

    fn fork_gap(&self) -> ForkGap {
        Cluster::fork_gap(self)
    }
}
