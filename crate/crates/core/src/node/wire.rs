//! Node-to-node frames: `tag || body || mac`, where the MAC is
//! `H(sender secret || tag || body)`. A frame that fails the MAC or does
//! not decode is dropped by the receiver.

use std::sync::Arc;

use bytes::Bytes;
use thiserror::Error;

use crate::chain::{Block, Transaction};
use crate::consensus::pbft::PbftMessage;
use crate::hash::{sha256, DecodeError, Decoder, Encoder, Hash256};
use crate::netsim::NodeId;

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum NetMessage {
    Tx(Transaction),
    Block(Arc<Block>),
    GetBlock(Hash256),
    Pbft(PbftMessage),
    SyncRequest { from_height: u64 },
    SyncResponse { blocks: Vec<Arc<Block>> },
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum WireError {
    #[error("frame too short")]
    Short,
    #[error("MAC mismatch")]
    BadMac,
    #[error("decode: {0}")]
    Decode(#[from] DecodeError),
    #[error("sender field {claimed} does not match channel sender {actual}")]
    Spoofed { claimed: NodeId, actual: NodeId },
}

const MAC_LEN: usize = 32;

/// Simulated per-node MAC key.
pub fn node_secret(id: NodeId) -> Hash256 {
    let mut enc = Encoder::new();
    enc.str("node-secret").u64(id as u64);
    enc.digest()
}

fn mac(sender: NodeId, tagged_body: &[u8]) -> Hash256 {
    let mut buf = Vec::with_capacity(32 + tagged_body.len());
    buf.extend_from_slice(&node_secret(sender).0);
    buf.extend_from_slice(tagged_body);
    sha256(&buf)
}

impl NetMessage {
    fn tag(&self) -> u8 {
        match self {
            NetMessage::Tx(_) => 1,
            NetMessage::Block(_) => 2,
            NetMessage::GetBlock(_) => 3,
            NetMessage::Pbft(_) => 4,
            NetMessage::SyncRequest { .. } => 5,
            NetMessage::SyncResponse { .. } => 6,
        }
    }

    pub fn kind(&self) -> &'static str {
        match self {
            NetMessage::Tx(_) => "tx",
            NetMessage::Block(_) => "block",
            NetMessage::GetBlock(_) => "get_block",
            NetMessage::Pbft(_) => "pbft",
            NetMessage::SyncRequest { .. } => "sync_request",
            NetMessage::SyncResponse { .. } => "sync_response",
        }
    }

    pub fn encode(&self, sender: NodeId) -> Bytes {
        let mut enc = Encoder::with_capacity(256);
        enc.raw(&[self.tag()]);
        match self {
            NetMessage::Tx(tx) => tx.encode(&mut enc),
            NetMessage::Block(b) => b.encode(&mut enc),
            NetMessage::GetBlock(id) => {
                enc.hash(id);
            }
            NetMessage::Pbft(m) => m.encode(&mut enc),
            NetMessage::SyncRequest { from_height } => {
                enc.u64(*from_height);
            }
            NetMessage::SyncResponse { blocks } => {
                enc.u64(blocks.len() as u64);
                for b in blocks {
                    b.encode(&mut enc);
                }
            }
        }
        let mut frame = enc.finish();
        let m = mac(sender, &frame);
        frame.extend_from_slice(&m.0);
        Bytes::from(frame)
    }

    pub fn decode(frame: &[u8], sender: NodeId) -> Result<Self, WireError> {
        if frame.len() < 1 + MAC_LEN {
            return Err(WireError::Short);
        }
        let (body, tag_mac) = frame.split_at(frame.len() - MAC_LEN);
        if mac(sender, body).0 != tag_mac {
            return Err(WireError::BadMac);
        }
        let mut dec = Decoder::new(&body[1..]);
        let msg = match body[0] {
            1 => NetMessage::Tx(Transaction::decode(&mut dec)?),
            2 => NetMessage::Block(Arc::new(Block::decode(&mut dec)?)),
            3 => NetMessage::GetBlock(dec.hash()?),
            4 => {
                let m = PbftMessage::decode(&mut dec)?;
                if m.sender != sender {
                    return Err(WireError::Spoofed {
                        claimed: m.sender,
                        actual: sender,
                    });
                }
                NetMessage::Pbft(m)
            }
            5 => NetMessage::SyncRequest {
                from_height: dec.u64()?,
            },
            6 => {
                let n = dec.u64()? as usize;
                let mut blocks = Vec::with_capacity(n.min(1024));
                for _ in 0..n {
                    blocks.push(Arc::new(Block::decode(&mut dec)?));
                }
                NetMessage::SyncResponse { blocks }
            }
            t => return Err(DecodeError::UnknownTag(t).into()),
        };
        dec.finish()?;
        Ok(msg)
    }
}
