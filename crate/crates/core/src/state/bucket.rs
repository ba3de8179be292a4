//! Bucket-Merkle tree: keys hash into a fixed number of buckets, each bucket
//! is digested over its sorted contents, and the bucket digests are combined
//! by a Merkle tree of configurable fanout.

use std::collections::BTreeMap;

use sha2::{Digest, Sha256};

use crate::hash::{sha256, Hash256};

pub const DEFAULT_BUCKETS: u64 = 1009;
pub const DEFAULT_FANOUT: usize = 2;

pub fn bucket_index(key: &[u8], buckets: u64) -> usize {
    (sha256(key).prefix_u64() % buckets) as usize
}

/// `H(len(k) || k || len(v) || v || ...)` over sorted pairs; zero when empty.
pub fn bucket_digest<'a>(pairs: impl Iterator<Item = (&'a [u8], &'a [u8])>) -> Hash256 {
    let mut h = Sha256::new();
    let mut any = false;
    for (k, v) in pairs {
        any = true;
        h.update((k.len() as u32).to_be_bytes());
        h.update(k);
        h.update((v.len() as u32).to_be_bytes());
        h.update(v);
    }
    if any {
        Hash256(h.finalize().into())
    } else {
        Hash256::ZERO
    }
}

/// Digest of one group of child hashes: `H(c0 || c1 || ...)`.
pub fn group_digest(children: &[Hash256]) -> Hash256 {
    let mut h = Sha256::new();
    for c in children {
        h.update(c.0);
    }
    Hash256(h.finalize().into())
}

#[derive(Debug, Clone)]
pub struct BucketTree {
    buckets: u64,
    fanout: usize,
    contents: Vec<BTreeMap<Vec<u8>, Vec<u8>>>,
    /// levels[0] = bucket digests, last level = [root].
    levels: Vec<Vec<Hash256>>,
    dirty: Vec<usize>,
    len: usize,
}

impl BucketTree {
    pub fn new(buckets: u64, fanout: usize) -> Self {
        assert!(buckets > 0, "bucket count must be positive");
        assert!(fanout >= 2, "fanout must be at least 2");
        let mut levels = vec![vec![Hash256::ZERO; buckets as usize]];
        while levels.last().unwrap().len() > 1 {
            let below = levels.last().unwrap();
            let up: Vec<Hash256> = below.chunks(fanout).map(group_digest).collect();
            levels.push(up);
        }
        if buckets == 1 {
            // A lone bucket is still wrapped once so the root is a tree node.
            levels.push(vec![group_digest(&levels[0])]);
        }
        BucketTree {
            buckets,
            fanout,
            contents: vec![BTreeMap::new(); buckets as usize],
            levels,
            dirty: Vec::new(),
            len: 0,
        }
    }

    pub fn buckets(&self) -> u64 {
        self.buckets
    }

    pub fn fanout(&self) -> usize {
        self.fanout
    }

    pub fn insert(&mut self, key: &[u8], value: &[u8]) {
        let b = bucket_index(key, self.buckets);
        if self.contents[b]
            .insert(key.to_vec(), value.to_vec())
            .is_none()
        {
            self.len += 1;
        }
        self.dirty.push(b);
    }

    pub fn remove(&mut self, key: &[u8]) -> bool {
        let b = bucket_index(key, self.buckets);
        let removed = self.contents[b].remove(key).is_some();
        if removed {
            self.len -= 1;
            self.dirty.push(b);
        }
        removed
    }

    pub fn root_hash(&mut self) -> Hash256 {
        if !self.dirty.is_empty() {
            let mut idx = std::mem::take(&mut self.dirty);
            idx.sort_unstable();
            idx.dedup();
            for &b in &idx {
                self.levels[0][b] = bucket_digest(
                    self.contents[b]
                        .iter()
                        .map(|(k, v)| (k.as_slice(), v.as_slice())),
                );
            }
            for lvl in 1..self.levels.len() {
                let mut parents: Vec<usize> = idx.iter().map(|i| i / self.fanout).collect();
                parents.dedup();
                for &p in &parents {
                    let lo = p * self.fanout;
                    let hi = (lo + self.fanout).min(self.levels[lvl - 1].len());
                    let d = group_digest(&self.levels[lvl - 1][lo..hi]);
                    self.levels[lvl][p] = d;
                }
                idx = parents;
            }
        }
        if self.len == 0 {
            Hash256::ZERO
        } else {
            self.levels.last().unwrap()[0]
        }
    }
}
