//! Blocks, transactions, and the block tree.

mod block;
mod merkle;
mod tree;
mod tx;

use thiserror::Error;

pub use block::{hash_block, tx_merkle_root, Block, BlockHeader};
pub use merkle::merkle_root;
pub use tree::{AppendResult, BlockTree, ForkGap, ForkRule, ORPHAN_CAPACITY};
pub use tx::{AccountId, Signer, Transaction};

use crate::hash::Hash256;

#[derive(Debug, Error, PartialEq, Eq)]
pub enum ChainError {
    #[error("block {0:?} is malformed (tx root or receipt mismatch)")]
    Malformed(Hash256),
    #[error("block {id:?} has height {height} but its parent is at {parent_height}")]
    BadHeight {
        id: Hash256,
        height: u64,
        parent_height: u64,
    },
}
