use crate::hash::{hash_pair, Hash256};

/// Binary Merkle root. A lone node at any level is paired with itself; the
/// root of a single leaf is the leaf, and the empty list maps to zero.
pub fn merkle_root(leaves: &[Hash256]) -> Hash256 {
    match leaves.len() {
        0 => Hash256::ZERO,
        1 => leaves[0],
        _ => {
            let mut level: Vec<Hash256> = leaves.to_vec();
            while level.len() > 1 {
                level = level
                    .chunks(2)
                    .map(|pair| hash_pair(&pair[0], pair.get(1).unwrap_or(&pair[0])))
                    .collect();
            }
            level[0]
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::hash::sha256;

    #[test]
    fn empty_and_single() {
        assert_eq!(merkle_root(&[]), Hash256::ZERO);
        let a = sha256(b"a");
        assert_eq!(merkle_root(&[a]), a);
    }

    #[test]
    fn three_leaves_match_hand_built_tree() {
        let ids: Vec<_> = [b"t1", b"t2", b"t3"].iter().map(|s| sha256(*s)).collect();
        let cat = |a: &Hash256, b: &Hash256| {
            let mut v = a.0.to_vec();
            v.extend_from_slice(&b.0);
            sha256(&v)
        };
        let h12 = cat(&ids[0], &ids[1]);
        let h33 = cat(&ids[2], &ids[2]);
        assert_eq!(merkle_root(&ids), cat(&h12, &h33));
    }
}
