//! Consensus engines: proof-of-work mining, PBFT replicas, and
//! proof-of-authority slot scheduling.

pub mod pbft;
pub mod poa;
pub mod pow;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::chain::ForkRule;
use crate::netsim::NodeId;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ConsensusKind {
    Pow,
    Pbft,
    Poa,
}

impl ConsensusKind {
    pub fn name(&self) -> &'static str {
        match self {
            ConsensusKind::Pow => "pow",
            ConsensusKind::Pbft => "pbft",
            ConsensusKind::Poa => "poa",
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ConsensusConfig {
    pub kind: ConsensusKind,
    /// Initial PoW difficulty; target = 2^256 / difficulty.
    pub difficulty: u64,
    pub retarget: bool,
    /// Desired inter-block interval for retargeting, in ticks.
    pub target_interval: u64,
    /// Hash attempts per tick per node.
    pub attempts_per_tick: u64,
    /// Ticks of attempts a miner runs per scheduling step.
    pub mine_window: u64,
    pub fork_rule: ForkRule,
    /// PoA slot length in ticks.
    pub step_duration: u64,
    /// PoA producers in rotation order; empty means every node.
    pub authorities: Vec<NodeId>,
    /// Max transactions per block.
    pub batch_size: usize,
    /// Max summed gas limit per block.
    pub max_block_gas: u64,
    /// PBFT: how long a leader waits for a batch to fill.
    pub batch_timeout: u64,
    /// PBFT: progress timeout before a view change.
    pub view_timeout: u64,
    /// PBFT: use quorum N - f instead of 2f + 1.
    pub strict_quorum: bool,
}

impl Default for ConsensusConfig {
    fn default() -> Self {
        ConsensusConfig {
            kind: ConsensusKind::Pbft,
            difficulty: 1_000_000,
            retarget: false,
            target_interval: 2_000,
            attempts_per_tick: 10_000,
            mine_window: 100,
            fork_rule: ForkRule::Longest,
            step_duration: 1_000,
            authorities: Vec::new(),
            batch_size: 500,
            max_block_gas: u64::MAX,
            batch_timeout: 500,
            view_timeout: 2_000,
            strict_quorum: false,
        }
    }
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum ConfigError {
    #[error("{0} must be at least 1")]
    Zero(&'static str),
    #[error("authority {0} is not a node")]
    UnknownAuthority(NodeId),
}

impl ConsensusConfig {
    pub fn validate(&self, nodes: usize) -> Result<(), ConfigError> {
        if nodes == 0 {
            return Err(ConfigError::Zero("node count"));
        }
        if self.batch_size == 0 {
            return Err(ConfigError::Zero("batch_size"));
        }
        match self.kind {
            ConsensusKind::Pow => {
                if self.difficulty == 0 {
                    return Err(ConfigError::Zero("difficulty"));
                }
                if self.attempts_per_tick == 0 {
                    return Err(ConfigError::Zero("attempts_per_tick"));
                }
                if self.mine_window == 0 {
                    return Err(ConfigError::Zero("mine_window"));
                }
                if self.retarget && self.target_interval == 0 {
                    return Err(ConfigError::Zero("target_interval"));
                }
            }
            ConsensusKind::Pbft => {
                if self.view_timeout == 0 {
                    return Err(ConfigError::Zero("view_timeout"));
                }
            }
            ConsensusKind::Poa => {
                if self.step_duration == 0 {
                    return Err(ConfigError::Zero("step_duration"));
                }
                if let Some(a) = self.authorities.iter().find(|a| **a >= nodes) {
                    return Err(ConfigError::UnknownAuthority(*a));
                }
            }
        }
        Ok(())
    }

    /// PoA authority list with the empty default expanded to all nodes.
    pub fn authority_list(&self, nodes: usize) -> Vec<NodeId> {
        if self.authorities.is_empty() {
            (0..nodes).collect()
        } else {
            self.authorities.clone()
        }
    }
}
