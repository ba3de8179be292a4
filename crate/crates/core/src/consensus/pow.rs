//! Hash-puzzle mining, verification, and difficulty retargeting.

use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::chain::{hash_block, Block, BlockHeader};
use crate::hash::Hash256;

/// Intervals averaged per retarget, and the retarget period in blocks.
pub const RETARGET_WINDOW: usize = 10;

/// True iff `hash` read as a big-endian 256-bit integer is below
/// `2^256 / difficulty`, checked as `hash * difficulty < 2^256` without
/// division.
pub fn meets_target(hash: &Hash256, difficulty: u64) -> bool {
    if difficulty <= 1 {
        return true;
    }
    let mut carry: u128 = 0;
    for limb in (0..4).rev() {
        let bytes: [u8; 8] = hash.0[limb * 8..limb * 8 + 8].try_into().expect("8 bytes");
        let prod = u64::from_be_bytes(bytes) as u128 * difficulty as u128 + carry;
        carry = prod >> 64;
    }
    carry == 0
}

pub fn pow_verify(header: &BlockHeader, difficulty: u64) -> bool {
    meets_target(&hash_block(header), difficulty)
}

/// Try up to `attempts` consecutive nonces on `header`, starting at `start`.
/// Returns the number of attempts used when a nonce wins; the header's nonce
/// is left at the winner.
pub fn mine_header(
    header: &mut BlockHeader,
    difficulty: u64,
    start: u64,
    attempts: u64,
) -> Option<u64> {
    for i in 0..attempts {
        header.nonce = start.wrapping_add(i);
        if pow_verify(header, difficulty) {
            return Some(i + 1);
        }
    }
    None
}

/// Seeded mining over an assembled candidate block. On success returns the
/// sealed block and the attempts it took.
pub fn pow_try_mine(
    mut candidate: Block,
    difficulty: u64,
    attempts: u64,
    rng_seed: u64,
) -> Option<(Block, u64)> {
    let start = ChaCha8Rng::seed_from_u64(rng_seed).next_u64();
    let used = mine_header(&mut candidate.header, difficulty, start, attempts)?;
    Some((candidate, used))
}

/// `difficulty * target / mean(intervals)`, moving at most a factor of two
/// either way.
pub fn pow_retarget(recent_intervals: &[u64], difficulty: u64, target_interval: u64) -> u64 {
    if recent_intervals.is_empty() {
        return difficulty;
    }
    let sum: u128 = recent_intervals.iter().map(|x| *x as u128).sum();
    let n = recent_intervals.len() as u128;
    let mean_scaled = sum.max(1);
    let proposed = difficulty as u128 * target_interval as u128 * n / mean_scaled;
    let lo = (difficulty as u128 / 2).max(1);
    let hi = difficulty as u128 * 2;
    proposed.clamp(lo, hi).min(u64::MAX as u128) as u64
}

/// Difficulty for a block at `height`, given its ancestors' timestamps
/// (`timestamps[k]` is the timestamp of the ancestor at height
/// `height - timestamps.len() + k`) and the parent's difficulty.
pub fn next_difficulty(
    parent_difficulty: u64,
    height: u64,
    ancestor_timestamps: &[u64],
    target_interval: u64,
) -> u64 {
    let w = RETARGET_WINDOW as u64;
    if height <= w || !height.is_multiple_of(w) || ancestor_timestamps.len() < RETARGET_WINDOW + 1 {
        return parent_difficulty;
    }
    let ts = &ancestor_timestamps[ancestor_timestamps.len() - (RETARGET_WINDOW + 1)..];
    let intervals: Vec<u64> = ts.windows(2).map(|p| p[1].saturating_sub(p[0])).collect();
    pow_retarget(&intervals, parent_difficulty, target_interval)
}
