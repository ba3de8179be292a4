//! Fixed block-id and Merkle-root vectors computed outside the crate with
//! Python's hashlib (see `vectors/blocks.json`).

use ledgerbench::chain::{hash_block, merkle_root, BlockHeader};
use ledgerbench::hash::Hash256;
use serde_json::Value;

fn vectors() -> Value {
    serde_json::from_str(include_str!("vectors/blocks.json")).unwrap()
}

fn h(v: &Value) -> Hash256 {
    Hash256::from_hex(v.as_str().unwrap()).unwrap()
}

#[test]
fn header_ids() {
    let v = vectors();
    let cases = v["headers"].as_array().unwrap();
    assert!(!cases.is_empty());
    for c in cases {
        let header = BlockHeader {
            parent: h(&c["parent"]),
            height: c["height"].as_u64().unwrap(),
            tx_root: h(&c["tx_root"]),
            state_root: h(&c["state_root"]),
            proposer: c["proposer"].as_u64().unwrap(),
            nonce: c["nonce"].as_u64().unwrap(),
            timestamp: c["timestamp"].as_u64().unwrap(),
        };
        assert_eq!(hash_block(&header), h(&c["id"]), "{c}");
    }
    assert_eq!(hash_block(&BlockHeader::genesis()), h(&cases[0]["id"]));
}

#[test]
fn merkle_roots() {
    for c in vectors()["merkle"].as_array().unwrap() {
        let leaves: Vec<Hash256> = c["leaves"].as_array().unwrap().iter().map(h).collect();
        assert_eq!(
            merkle_root(&leaves),
            h(&c["root"]),
            "{} leaves",
            leaves.len()
        );
    }
}
