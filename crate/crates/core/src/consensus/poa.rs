//! Proof-of-authority slot schedule: authorities take turns in fixed
//! time slots.

use crate::chain::BlockHeader;
use crate::netsim::NodeId;

/// Index into the authority list owning the slot containing `now`.
pub fn poa_slot(now: u64, step_duration: u64, authorities: usize) -> usize {
    ((now / step_duration) % authorities as u64) as usize
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct PoaSchedule {
    authorities: Vec<NodeId>,
    step: u64,
}

impl PoaSchedule {
    pub fn new(authorities: Vec<NodeId>, step: u64) -> Self {
        assert!(!authorities.is_empty() && step > 0);
        PoaSchedule { authorities, step }
    }

    pub fn step(&self) -> u64 {
        self.step
    }

    pub fn slot_number(&self, tick: u64) -> u64 {
        tick / self.step
    }

    pub fn producer_at(&self, tick: u64) -> NodeId {
        self.authorities[poa_slot(tick, self.step, self.authorities.len())]
    }

    pub fn is_authority(&self, node: NodeId) -> bool {
        self.authorities.contains(&node)
    }

    /// First slot boundary strictly after `now`.
    pub fn next_slot_start(&self, now: u64) -> u64 {
        (now / self.step + 1) * self.step
    }

    /// Slot `node` may produce in at `now`, given the last slot it produced
    /// in. `None` when out of turn or already produced this slot.
    pub fn may_produce(&self, node: NodeId, now: u64, last_slot: Option<u64>) -> Option<u64> {
        let slot = self.slot_number(now);
        (self.producer_at(now) == node && last_slot.is_none_or(|s| s < slot)).then_some(slot)
    }

    /// Producer and slot checks for a received header. Timestamps may run at
    /// most one slot ahead of the receiver's clock.
    pub fn validate(&self, header: &BlockHeader, parent: &BlockHeader, now: u64) -> bool {
        let slot = self.slot_number(header.timestamp);
        header.proposer as usize == self.producer_at(header.timestamp)
            && (parent.height == 0 || slot > self.slot_number(parent.timestamp))
            && header.timestamp <= now + self.step
    }
}
