use std::collections::{BTreeSet, HashMap, VecDeque};
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use super::block::Block;
use super::ChainError;
use crate::hash::Hash256;

pub const ORPHAN_CAPACITY: usize = 1024;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ForkRule {
    #[default]
    Longest,
    Ghost,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum AppendResult {
    /// The block and any buffered descendants it unlocked, in insertion order.
    Accepted {
        inserted: Vec<Hash256>,
    },
    Duplicate,
    Orphaned,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ForkGap {
    pub total_blocks: u64,
    pub main_branch_blocks: u64,
    pub ratio: f64,
}

impl ForkGap {
    /// Blocks off the main branch.
    pub fn delta(&self) -> u64 {
        self.total_blocks - self.main_branch_blocks
    }
}

/// All blocks a node knows about, rooted at genesis.
#[derive(Clone, Debug)]
pub struct BlockTree {
    blocks: HashMap<Hash256, Arc<Block>>,
    children: HashMap<Hash256, BTreeSet<Hash256>>,
    genesis: Hash256,
    best_longest: Hash256,
    orphans: HashMap<Hash256, Arc<Block>>,
    orphan_order: VecDeque<Hash256>,
    orphans_by_parent: HashMap<Hash256, Vec<Hash256>>,
    pub confirmed_by_users: u64,
}

impl Default for BlockTree {
    fn default() -> Self {
        Self::new(Block::genesis())
    }
}

impl BlockTree {
    pub fn new(genesis: Block) -> Self {
        let id = genesis.id();
        let mut blocks = HashMap::new();
        blocks.insert(id, Arc::new(genesis));
        BlockTree {
            blocks,
            children: HashMap::new(),
            genesis: id,
            best_longest: id,
            orphans: HashMap::new(),
            orphan_order: VecDeque::new(),
            orphans_by_parent: HashMap::new(),
            confirmed_by_users: 0,
        }
    }

    pub fn genesis(&self) -> Hash256 {
        self.genesis
    }

    pub fn get(&self, id: &Hash256) -> Option<&Arc<Block>> {
        self.blocks.get(id)
    }

    pub fn contains(&self, id: &Hash256) -> bool {
        self.blocks.contains_key(id)
    }

    /// Number of blocks including genesis.
    pub fn len(&self) -> usize {
        self.blocks.len()
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn orphan_count(&self) -> usize {
        self.orphans.len()
    }

    pub fn children(&self, id: &Hash256) -> impl Iterator<Item = &Hash256> {
        self.children.get(id).into_iter().flatten()
    }

    pub fn append(&mut self, block: Block) -> Result<AppendResult, ChainError> {
        self.append_arc(Arc::new(block))
    }

    pub fn append_arc(&mut self, block: Arc<Block>) -> Result<AppendResult, ChainError> {
        if !block.is_well_formed() {
            return Err(ChainError::Malformed(block.id()));
        }
        let id = block.id();
        if self.blocks.contains_key(&id) || self.orphans.contains_key(&id) {
            return Ok(AppendResult::Duplicate);
        }
        let parent = block.header.parent;
        let Some(parent_block) = self.blocks.get(&parent) else {
            self.buffer_orphan(id, block);
            return Ok(AppendResult::Orphaned);
        };
        if block.header.height != parent_block.header.height + 1 {
            return Err(ChainError::BadHeight {
                id,
                height: block.header.height,
                parent_height: parent_block.header.height,
            });
        }
        let mut inserted = Vec::new();
        self.insert_linked(id, block);
        inserted.push(id);

        // Adopt buffered descendants breadth-first.
        let mut frontier = VecDeque::from([id]);
        while let Some(p) = frontier.pop_front() {
            let Some(waiting) = self.orphans_by_parent.remove(&p) else {
                continue;
            };
            let parent_height = self.blocks[&p].header.height;
            for child in waiting {
                let Some(b) = self.orphans.remove(&child) else {
                    continue;
                };
                self.orphan_order.retain(|o| *o != child);
                if b.header.height != parent_height + 1 {
                    continue;
                }
                self.insert_linked(child, b);
                inserted.push(child);
                frontier.push_back(child);
            }
        }
        Ok(AppendResult::Accepted { inserted })
    }

    fn insert_linked(&mut self, id: Hash256, block: Arc<Block>) {
        let parent = block.header.parent;
        let height = block.header.height;
        self.children.entry(parent).or_default().insert(id);
        self.blocks.insert(id, block);
        let best_h = self.blocks[&self.best_longest].header.height;
        if height > best_h || (height == best_h && id < self.best_longest) {
            self.best_longest = id;
        }
    }

    fn buffer_orphan(&mut self, id: Hash256, block: Arc<Block>) {
        if self.orphans.len() >= ORPHAN_CAPACITY {
            if let Some(old) = self.orphan_order.pop_front() {
                if let Some(b) = self.orphans.remove(&old) {
                    if let Some(v) = self.orphans_by_parent.get_mut(&b.header.parent) {
                        v.retain(|x| *x != old);
                    }
                }
            }
        }
        self.orphans_by_parent
            .entry(block.header.parent)
            .or_default()
            .push(id);
        self.orphans.insert(id, block);
        self.orphan_order.push_back(id);
    }

    /// Tip of the main branch under `rule`. Ties break toward the smallest id.
    pub fn fork_choice(&self, rule: ForkRule) -> Hash256 {
        match rule {
            ForkRule::Longest => self.best_longest,
            ForkRule::Ghost => self.ghost_tip(),
        }
    }

    fn ghost_tip(&self) -> Hash256 {
        let weights = self.subtree_sizes();
        let mut cur = self.genesis;
        loop {
            let mut best: Option<(u64, Hash256)> = None;
            for c in self.children(&cur) {
                let w = weights[c];
                // Children iterate in ascending id order, so strict > keeps the smallest id on ties.
                if best.is_none_or(|(bw, _)| w > bw) {
                    best = Some((w, *c));
                }
            }
            match best {
                Some((_, c)) => cur = c,
                None => return cur,
            }
        }
    }

    /// Subtree block counts (each block counts itself).
    pub fn subtree_sizes(&self) -> HashMap<Hash256, u64> {
        let mut order = Vec::with_capacity(self.blocks.len());
        let mut stack = vec![self.genesis];
        while let Some(id) = stack.pop() {
            order.push(id);
            stack.extend(self.children(&id).copied());
        }
        let mut sizes: HashMap<Hash256, u64> = HashMap::with_capacity(order.len());
        for id in order.iter().rev() {
            let s = 1 + self.children(id).map(|c| sizes[c]).sum::<u64>();
            sizes.insert(*id, s);
        }
        sizes
    }

    /// Block ids from genesis (index 0) to `tip`.
    pub fn branch(&self, tip: &Hash256) -> Vec<Hash256> {
        let mut out = Vec::new();
        let mut cur = *tip;
        while let Some(b) = self.blocks.get(&cur) {
            out.push(cur);
            if cur == self.genesis {
                break;
            }
            cur = b.header.parent;
        }
        out.reverse();
        out
    }

    /// Ancestor of `tip` (inclusive) at `height`.
    pub fn ancestor_at(&self, tip: &Hash256, height: u64) -> Option<Hash256> {
        let mut cur = *tip;
        loop {
            let b = self.blocks.get(&cur)?;
            if b.header.height == height {
                return Some(cur);
            }
            if b.header.height < height || cur == self.genesis {
                return None;
            }
            cur = b.header.parent;
        }
    }

    pub fn common_ancestor(&self, a: &Hash256, b: &Hash256) -> Option<Hash256> {
        let (mut x, mut y) = (*a, *b);
        loop {
            let bx = self.blocks.get(&x)?;
            let by = self.blocks.get(&y)?;
            if x == y {
                return Some(x);
            }
            if bx.header.height >= by.header.height {
                x = bx.header.parent;
            } else {
                y = by.header.parent;
            }
        }
    }

    pub fn is_ancestor(&self, ancestor: &Hash256, of: &Hash256) -> bool {
        match self.blocks.get(ancestor) {
            Some(a) => self.ancestor_at(of, a.header.height) == Some(*ancestor),
            None => false,
        }
    }

    pub fn height_of(&self, id: &Hash256) -> Option<u64> {
        self.blocks.get(id).map(|b| b.header.height)
    }

    pub fn fork_gap(&self, rule: ForkRule) -> ForkGap {
        let total = (self.blocks.len() - 1) as u64;
        let tip = self.fork_choice(rule);
        let main = self.blocks[&tip].header.height;
        let ratio = if total == 0 {
            1.0
        } else {
            main as f64 / total as f64
        };
        ForkGap {
            total_blocks: total,
            main_branch_blocks: main,
            ratio,
        }
    }

    pub fn iter(&self) -> impl Iterator<Item = (&Hash256, &Arc<Block>)> {
        self.blocks.iter()
    }
}
