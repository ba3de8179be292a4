//! Account key-value state with Merkle commitments and per-key version
//! history.

mod bucket;
mod patricia;
mod snapshot;

use std::cell::Cell;
use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

pub use bucket::{
    bucket_digest, bucket_index, group_digest, BucketTree, DEFAULT_BUCKETS, DEFAULT_FANOUT,
};
pub use patricia::{to_nibbles, PatriciaTrie};
pub use snapshot::{read_snapshot, write_snapshot, SnapshotRecord};

use crate::hash::{sha256, Hash256};

pub const MAX_KEY_LEN: usize = 256;

#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct StateKey {
    pub namespace: Hash256,
    #[serde(with = "hex_bytes")]
    pub key: Vec<u8>,
}

impl StateKey {
    pub fn new(namespace: Hash256, key: impl Into<Vec<u8>>) -> Self {
        StateKey {
            namespace,
            key: key.into(),
        }
    }

    pub fn is_valid(&self) -> bool {
        (1..=MAX_KEY_LEN).contains(&self.key.len())
    }

    /// `namespace || key`, the path committed by the Merkle structures.
    pub fn encoded(&self) -> Vec<u8> {
        let mut v = Vec::with_capacity(32 + self.key.len());
        v.extend_from_slice(&self.namespace.0);
        v.extend_from_slice(&self.key);
        v
    }
}

mod hex_bytes {
    use serde::{Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(v: &[u8], s: S) -> Result<S::Ok, S::Error> {
        s.serialize_str(&hex::encode(v))
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Vec<u8>, D::Error> {
        let s = String::deserialize(d)?;
        hex::decode(s).map_err(serde::de::Error::custom)
    }
}

/// One version of a key. `value == None` marks a deletion.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct VersionedEntry {
    pub value: Option<Vec<u8>>,
    pub version: u64,
    pub commit_block: u64,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
#[derive(Default)]
pub enum StoreVariant {
    #[default]
    Patricia,
    Bucket {
        #[serde(default = "default_buckets")]
        buckets: u64,
        #[serde(default = "default_fanout")]
        fanout: usize,
    },
    Plain,
}

fn default_buckets() -> u64 {
    DEFAULT_BUCKETS
}

fn default_fanout() -> usize {
    DEFAULT_FANOUT
}

impl StoreVariant {
    pub fn bucket() -> Self {
        StoreVariant::Bucket {
            buckets: DEFAULT_BUCKETS,
            fanout: DEFAULT_FANOUT,
        }
    }
}

/// Emulated storage-engine latency, in ticks per operation.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct CostModel {
    pub read_cost: u64,
    pub write_cost: u64,
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum StateError {
    #[error("write to key at height {height} below its last commit height {last}")]
    HeightRegression { height: u64, last: u64 },
    #[error("key length {0} outside 1..=256")]
    InvalidKey(usize),
}

#[derive(Debug, Clone)]
enum Commitment {
    Patricia(PatriciaTrie),
    Bucket(BucketTree),
    Plain(Option<Hash256>),
}

#[derive(Debug, Clone)]
pub struct StateStore {
    variant: StoreVariant,
    live: BTreeMap<StateKey, Vec<u8>>,
    history: BTreeMap<StateKey, Vec<VersionedEntry>>,
    commitment: Commitment,
    /// (commit_block, key) per history append, for reverting whole blocks.
    journal: Vec<(u64, StateKey)>,
    journal_sorted: bool,
    cost: CostModel,
    io_ticks: Cell<u64>,
}

impl Default for StateStore {
    fn default() -> Self {
        StateStore::new(StoreVariant::default())
    }
}

impl StateStore {
    pub fn new(variant: StoreVariant) -> Self {
        let commitment = match variant {
            StoreVariant::Patricia => Commitment::Patricia(PatriciaTrie::new()),
            StoreVariant::Bucket { buckets, fanout } => {
                Commitment::Bucket(BucketTree::new(buckets, fanout))
            }
            StoreVariant::Plain => Commitment::Plain(None),
        };
        StateStore {
            variant,
            live: BTreeMap::new(),
            history: BTreeMap::new(),
            commitment,
            journal: Vec::new(),
            journal_sorted: true,
            cost: CostModel::default(),
            io_ticks: Cell::new(0),
        }
    }

    pub fn with_cost(mut self, cost: CostModel) -> Self {
        self.cost = cost;
        self
    }

    pub fn variant(&self) -> StoreVariant {
        self.variant
    }

    pub fn len(&self) -> usize {
        self.live.len()
    }

    pub fn is_empty(&self) -> bool {
        self.live.is_empty()
    }

    /// Accumulated emulated I/O time since the last call.
    pub fn take_io_ticks(&self) -> u64 {
        self.io_ticks.replace(0)
    }

    fn last_commit(&self, key: &StateKey) -> Option<u64> {
        self.history
            .get(key)
            .and_then(|v| v.last())
            .map(|e| e.commit_block)
    }

    fn append_history(&mut self, key: &StateKey, value: Option<Vec<u8>>, height: u64) -> u64 {
        let versions = self.history.entry(key.clone()).or_default();
        let version = versions.last().map_or(1, |e| e.version + 1);
        versions.push(VersionedEntry {
            value,
            version,
            commit_block: height,
        });
        if self.journal.last().is_some_and(|(h, _)| *h > height) {
            self.journal_sorted = false;
        }
        self.journal.push((height, key.clone()));
        version
    }

    pub fn put(&mut self, key: StateKey, value: Vec<u8>, height: u64) -> Result<u64, StateError> {
        if !key.is_valid() {
            return Err(StateError::InvalidKey(key.key.len()));
        }
        if let Some(last) = self.last_commit(&key) {
            if height < last {
                return Err(StateError::HeightRegression { height, last });
            }
        }
        self.io_ticks
            .set(self.io_ticks.get() + self.cost.write_cost);
        let version = self.append_history(&key, Some(value.clone()), height);
        self.commit_live(key, Some(value));
        Ok(version)
    }

    pub fn delete(&mut self, key: &StateKey, height: u64) -> Result<bool, StateError> {
        if !self.live.contains_key(key) {
            return Ok(false);
        }
        if let Some(last) = self.last_commit(key) {
            if height < last {
                return Err(StateError::HeightRegression { height, last });
            }
        }
        self.io_ticks
            .set(self.io_ticks.get() + self.cost.write_cost);
        self.append_history(key, None, height);
        self.commit_live(key.clone(), None);
        Ok(true)
    }

    fn commit_live(&mut self, key: StateKey, value: Option<Vec<u8>>) {
        let path = key.encoded();
        match (&mut self.commitment, &value) {
            (Commitment::Patricia(t), Some(v)) => t.insert(&path, sha256(v)),
            (Commitment::Patricia(t), None) => {
                t.remove(&path);
            }
            (Commitment::Bucket(t), Some(v)) => t.insert(&path, v),
            (Commitment::Bucket(t), None) => {
                t.remove(&path);
            }
            (Commitment::Plain(cache), _) => *cache = None,
        }
        match value {
            Some(v) => {
                self.live.insert(key, v);
            }
            None => {
                self.live.remove(&key);
            }
        }
    }

    pub fn get(&self, key: &StateKey) -> Option<&[u8]> {
        self.io_ticks.set(self.io_ticks.get() + self.cost.read_cost);
        self.live.get(key).map(Vec::as_slice)
    }

    /// Value of the latest version committed at or below `height`.
    pub fn get_at(&self, key: &StateKey, height: u64) -> Option<&[u8]> {
        self.io_ticks.set(self.io_ticks.get() + self.cost.read_cost);
        let versions = self.history.get(key)?;
        let idx = versions.partition_point(|e| e.commit_block <= height);
        if idx == 0 {
            return None;
        }
        versions[idx - 1].value.as_deref()
    }

    pub fn versions(&self, key: &StateKey) -> &[VersionedEntry] {
        self.history.get(key).map_or(&[], Vec::as_slice)
    }

    pub fn history_len(&self) -> usize {
        self.history.values().map(Vec::len).sum()
    }

    /// Live entries in `namespace` with key ≥ `start`, up to `limit`.
    pub fn scan(&self, namespace: Hash256, start: &[u8], limit: usize) -> Vec<(Vec<u8>, Vec<u8>)> {
        let from = StateKey::new(namespace, start.to_vec());
        let out: Vec<_> = self
            .live
            .range(from..)
            .take_while(|(k, _)| k.namespace == namespace)
            .take(limit)
            .map(|(k, v)| (k.key.clone(), v.clone()))
            .collect();
        self.io_ticks
            .set(self.io_ticks.get() + self.cost.read_cost * out.len().max(1) as u64);
        out
    }

    pub fn live_entries(&self) -> impl Iterator<Item = (&StateKey, &Vec<u8>)> {
        self.live.iter()
    }

    pub fn history_entries(&self) -> impl Iterator<Item = (&StateKey, &VersionedEntry)> {
        self.history
            .iter()
            .flat_map(|(k, vs)| vs.iter().map(move |e| (k, e)))
    }

    pub fn root(&mut self) -> Hash256 {
        match &mut self.commitment {
            Commitment::Patricia(t) => t.root_hash(),
            Commitment::Bucket(t) => t.root_hash(),
            Commitment::Plain(cache) => {
                if let Some(h) = cache {
                    return *h;
                }
                let h = plain_root(self.live.iter());
                *cache = Some(h);
                h
            }
        }
    }

    /// Drop every version committed above `height` and restore the live map
    /// from what remains. Used to unwind blocks on a reorg.
    pub fn revert_above(&mut self, height: u64) {
        let mut touched: Vec<StateKey> = Vec::new();
        if self.journal_sorted {
            while self.journal.last().is_some_and(|(h, _)| *h > height) {
                let (_, k) = self.journal.pop().unwrap();
                touched.push(k);
            }
        } else {
            let mut keep = Vec::with_capacity(self.journal.len());
            for (h, k) in self.journal.drain(..) {
                if h > height {
                    touched.push(k);
                } else {
                    keep.push((h, k));
                }
            }
            self.journal = keep;
            self.journal_sorted = self.journal.windows(2).all(|w| w[0].0 <= w[1].0);
        }
        touched.sort();
        touched.dedup();
        for key in touched {
            let restored = match self.history.get_mut(&key) {
                Some(versions) => {
                    versions.retain(|e| e.commit_block <= height);
                    let last = versions.last().and_then(|e| e.value.clone());
                    if versions.is_empty() {
                        self.history.remove(&key);
                    }
                    last
                }
                None => None,
            };
            let current = self.live.get(&key).cloned();
            if current != restored {
                self.commit_live(key, restored);
            }
        }
    }
}

/// `H` over the sorted live dump: `ns || len(k) || k || len(v) || v` per entry.
pub fn plain_root<'a>(entries: impl Iterator<Item = (&'a StateKey, &'a Vec<u8>)>) -> Hash256 {
    let mut h = Sha256::new();
    let mut any = false;
    for (k, v) in entries {
        any = true;
        h.update(k.namespace.0);
        h.update((k.key.len() as u32).to_be_bytes());
        h.update(&k.key);
        h.update((v.len() as u32).to_be_bytes());
        h.update(v);
    }
    if any {
        Hash256(h.finalize().into())
    } else {
        Hash256::ZERO
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn k(s: &str) -> StateKey {
        StateKey::new(Hash256([1; 32]), s.as_bytes().to_vec())
    }

    fn all_variants() -> Vec<StoreVariant> {
        vec![
            StoreVariant::Patricia,
            StoreVariant::bucket(),
            StoreVariant::Plain,
        ]
    }

    #[test]
    fn put_versions_and_heights() {
        let mut s = StateStore::default();
        assert_eq!(s.put(k("a"), b"1".to_vec(), 5).unwrap(), 1);
        assert_eq!(s.put(k("a"), b"2".to_vec(), 7).unwrap(), 2);
        let v = s.versions(&k("a"));
        assert_eq!((v[0].commit_block, v[1].commit_block), (5, 7));
        assert_eq!(
            s.put(k("a"), b"3".to_vec(), 6),
            Err(StateError::HeightRegression { height: 6, last: 7 })
        );
    }

    #[test]
    fn key_length_is_checked() {
        let mut s = StateStore::default();
        assert_eq!(s.put(k(""), vec![], 0), Err(StateError::InvalidKey(0)));
        let long = StateKey::new(Hash256::ZERO, vec![0u8; 257]);
        assert_eq!(s.put(long, vec![], 0), Err(StateError::InvalidKey(257)));
    }

    #[test]
    fn get_and_get_at() {
        let mut s = StateStore::default();
        assert_eq!(s.get(&k("x")), None);
        s.put(k("x"), b"h3".to_vec(), 3).unwrap();
        s.put(k("x"), b"h8".to_vec(), 8).unwrap();
        assert_eq!(s.get(&k("x")), Some(&b"h8"[..]));
        assert_eq!(s.get_at(&k("x"), 2), None);
        assert_eq!(s.get_at(&k("x"), 5), Some(&b"h3"[..]));
        assert_eq!(s.get_at(&k("x"), 8), s.get(&k("x")));
    }

    #[test]
    fn delete_semantics_every_variant() {
        for variant in all_variants() {
            let mut s = StateStore::new(variant);
            assert_eq!(s.root(), Hash256::ZERO);
            s.put(k("a"), b"1".to_vec(), 1).unwrap();
            let before = s.root();
            assert!(!s.delete(&k("missing"), 2).unwrap());
            assert_eq!(s.root(), before);
            s.put(k("b"), b"2".to_vec(), 2).unwrap();
            assert!(s.delete(&k("b"), 3).unwrap());
            assert_eq!(s.get(&k("b")), None);
            assert_eq!(s.root(), before, "{variant:?}");
            assert_eq!(s.get_at(&k("b"), 2), Some(&b"2"[..]));
            assert_eq!(s.get_at(&k("b"), 3), None);
        }
    }

    #[test]
    fn revert_restores_block_boundary() {
        for variant in all_variants() {
            let mut s = StateStore::new(variant);
            s.put(k("a"), b"1".to_vec(), 1).unwrap();
            s.put(k("b"), b"1".to_vec(), 1).unwrap();
            let at1 = s.root();
            s.put(k("a"), b"2".to_vec(), 2).unwrap();
            s.delete(&k("b"), 2).unwrap();
            s.put(k("c"), b"3".to_vec(), 3).unwrap();
            s.revert_above(1);
            assert_eq!(s.root(), at1);
            assert_eq!(s.get(&k("a")), Some(&b"1"[..]));
            assert_eq!(s.get(&k("b")), Some(&b"1"[..]));
            assert_eq!(s.get(&k("c")), None);
            assert_eq!(s.versions(&k("a")).len(), 1);
        }
    }

    #[test]
    fn revert_handles_unsorted_journal() {
        let mut s = StateStore::new(StoreVariant::Plain);
        s.put(k("a"), b"1".to_vec(), 9).unwrap();
        s.put(k("b"), b"1".to_vec(), 2).unwrap();
        s.revert_above(5);
        assert_eq!(s.get(&k("a")), None);
        assert_eq!(s.get(&k("b")), Some(&b"1"[..]));
    }

    #[test]
    fn scan_is_ordered_and_namespaced() {
        let mut s = StateStore::default();
        for name in ["c", "a", "b"] {
            s.put(k(name), name.as_bytes().to_vec(), 0).unwrap();
        }
        s.put(StateKey::new(Hash256([2; 32]), b"a".to_vec()), vec![], 0)
            .unwrap();
        let got = s.scan(Hash256([1; 32]), b"a", 10);
        let keys: Vec<_> = got.iter().map(|(k, _)| k.clone()).collect();
        assert_eq!(keys, vec![b"a".to_vec(), b"b".to_vec(), b"c".to_vec()]);
        assert_eq!(s.scan(Hash256([1; 32]), b"b", 1).len(), 1);
    }

    #[test]
    fn cost_model_accumulates() {
        let mut s = StateStore::default().with_cost(CostModel {
            read_cost: 2,
            write_cost: 5,
        });
        s.put(k("a"), vec![1], 0).unwrap();
        let _ = s.get(&k("a"));
        assert_eq!(s.take_io_ticks(), 7);
        assert_eq!(s.take_io_ticks(), 0);
    }
}
