use serde::{Deserialize, Serialize};

use super::merkle::merkle_root;
use super::tx::Transaction;
use crate::exec::Receipt;
use crate::hash::{DecodeError, Decoder, Encoder, Hash256};

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct BlockHeader {
    pub parent: Hash256,
    pub height: u64,
    pub tx_root: Hash256,
    pub state_root: Hash256,
    pub proposer: u64,
    pub nonce: u64,
    pub timestamp: u64,
}

impl BlockHeader {
    pub fn genesis() -> Self {
        BlockHeader {
            parent: Hash256::ZERO,
            height: 0,
            tx_root: Hash256::ZERO,
            state_root: Hash256::ZERO,
            proposer: 0,
            nonce: 0,
            timestamp: 0,
        }
    }

    /// Canonical serialization in declared field order.
    pub fn canonical_bytes(&self) -> Vec<u8> {
        let mut enc = Encoder::with_capacity(7 * 4 + 3 * 32 + 4 * 8);
        self.encode(&mut enc);
        enc.finish()
    }

    pub fn encode(&self, enc: &mut Encoder) {
        enc.hash(&self.parent)
            .u64(self.height)
            .hash(&self.tx_root)
            .hash(&self.state_root)
            .u64(self.proposer)
            .u64(self.nonce)
            .u64(self.timestamp);
    }

    pub fn decode(dec: &mut Decoder<'_>) -> Result<Self, DecodeError> {
        Ok(BlockHeader {
            parent: dec.hash()?,
            height: dec.u64()?,
            tx_root: dec.hash()?,
            state_root: dec.hash()?,
            proposer: dec.u64()?,
            nonce: dec.u64()?,
            timestamp: dec.u64()?,
        })
    }
}

/// Block id: SHA-256 of the canonical header serialization.
pub fn hash_block(header: &BlockHeader) -> Hash256 {
    crate::hash::sha256(&header.canonical_bytes())
}

pub fn tx_merkle_root(txs: &[Transaction]) -> Hash256 {
    let ids: Vec<Hash256> = txs.iter().map(|t| t.id).collect();
    merkle_root(&ids)
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Block {
    pub header: BlockHeader,
    pub transactions: Vec<Transaction>,
    pub receipts: Vec<Receipt>,
}

impl Block {
    pub fn genesis() -> Self {
        Block {
            header: BlockHeader::genesis(),
            transactions: Vec::new(),
            receipts: Vec::new(),
        }
    }

    pub fn id(&self) -> Hash256 {
        hash_block(&self.header)
    }

    pub fn height(&self) -> u64 {
        self.header.height
    }

    /// Structural checks that do not need state: receipt count and tx root.
    pub fn is_well_formed(&self) -> bool {
        self.receipts.len() == self.transactions.len()
            && tx_merkle_root(&self.transactions) == self.header.tx_root
            && self
                .transactions
                .iter()
                .zip(&self.receipts)
                .all(|(t, r)| t.id == r.tx_id)
    }

    pub fn encode(&self, enc: &mut Encoder) {
        self.header.encode(enc);
        enc.u64(self.transactions.len() as u64);
        for tx in &self.transactions {
            tx.encode(enc);
        }
        for r in &self.receipts {
            r.encode(enc);
        }
    }

    pub fn decode(dec: &mut Decoder<'_>) -> Result<Self, DecodeError> {
        let header = BlockHeader::decode(dec)?;
        let n = dec.u64()? as usize;
        let mut transactions = Vec::with_capacity(n.min(4096));
        for _ in 0..n {
            transactions.push(Transaction::decode(dec)?);
        }
        let mut receipts = Vec::with_capacity(n.min(4096));
        for _ in 0..n {
            receipts.push(Receipt::decode(dec)?);
        }
        Ok(Block {
            header,
            transactions,
            receipts,
        })
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut enc = Encoder::new();
        self.encode(&mut enc);
        enc.finish()
    }
}
