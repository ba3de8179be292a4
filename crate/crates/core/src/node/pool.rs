//! Pending transactions in arrival order with an id index.

use std::collections::{BTreeMap, HashMap};

use crate::chain::Transaction;
use crate::hash::Hash256;

#[derive(Debug, Default, Clone)]
pub struct Pool {
    by_seq: BTreeMap<u64, Transaction>,
    index: HashMap<Hash256, u64>,
    next: u64,
}

impl Pool {
    pub fn len(&self) -> usize {
        self.by_seq.len()
    }

    pub fn is_empty(&self) -> bool {
        self.by_seq.is_empty()
    }

    pub fn contains(&self, id: &Hash256) -> bool {
        self.index.contains_key(id)
    }

    /// Appends at the back; false if already present.
    pub fn insert(&mut self, tx: Transaction) -> bool {
        if self.index.contains_key(&tx.id) {
            return false;
        }
        self.next += 1;
        self.index.insert(tx.id, self.next);
        self.by_seq.insert(self.next, tx);
        true
    }

    pub fn remove(&mut self, id: &Hash256) -> Option<Transaction> {
        let seq = self.index.remove(id)?;
        self.by_seq.remove(&seq)
    }

    /// Oldest first.
    pub fn iter(&self) -> impl Iterator<Item = &Transaction> {
        self.by_seq.values()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::chain::AccountId;
    use crate::exec::{ContractId, ContractKind};

    fn tx(n: u64) -> Transaction {
        let c = ContractId::derive(AccountId(0), 0, ContractKind::DoNothing);
        Transaction::new(AccountId(n), c, "run", vec![], 0, n, 1)
    }

    #[test]
    fn fifo_with_dedup_and_removal() {
        let mut p = Pool::default();
        for n in [3, 1, 2] {
            assert!(p.insert(tx(n)));
        }
        assert!(!p.insert(tx(1)));
        p.remove(&tx(1).id);
        let order: Vec<u64> = p.iter().map(|t| t.sender.0).collect();
        assert_eq!(order, vec![3, 2]);
        p.insert(tx(1));
        assert_eq!(p.iter().last().unwrap().sender.0, 1);
        assert_eq!(p.len(), 3);
    }
}
