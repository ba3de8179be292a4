//! Append-only snapshot files: one JSON object per history entry.

use std::io::{BufRead, Write};

use serde::{Deserialize, Serialize};

use super::{StateKey, StateStore, StoreVariant};
use crate::hash::Hash256;

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct SnapshotRecord {
    pub namespace: Hash256,
    pub key: String,
    /// Hex value; `null` records a deletion.
    pub value: Option<String>,
    pub version: u64,
    pub commit_block: u64,
}

pub fn write_snapshot<W: Write>(store: &StateStore, mut out: W) -> anyhow::Result<()> {
    for (k, e) in store.history_entries() {
        let rec = SnapshotRecord {
            namespace: k.namespace,
            key: hex::encode(&k.key),
            value: e.value.as_ref().map(hex::encode),
            version: e.version,
            commit_block: e.commit_block,
        };
        serde_json::to_writer(&mut out, &rec)?;
        out.write_all(b"\n")?;
    }
    Ok(())
}

/// Rebuild a store by replaying snapshot records in commit order.
pub fn read_snapshot<R: BufRead>(variant: StoreVariant, input: R) -> anyhow::Result<StateStore> {
    let mut records = Vec::new();
    for line in input.lines() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        records.push(serde_json::from_str::<SnapshotRecord>(&line)?);
    }
    records.sort_by(|a, b| {
        (a.commit_block, &a.namespace, &a.key, a.version).cmp(&(
            b.commit_block,
            &b.namespace,
            &b.key,
            b.version,
        ))
    });
    let mut store = StateStore::new(variant);
    for r in records {
        let key = StateKey::new(r.namespace, hex::decode(&r.key)?);
        match r.value {
            Some(v) => {
                store.put(key, hex::decode(v)?, r.commit_block)?;
            }
            None => {
                store.delete(&key, r.commit_block)?;
            }
        }
    }
    Ok(store)
}
