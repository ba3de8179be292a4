//! Hex-nibble radix trie with leaf, extension, and branch nodes.
//!
//! The shape is canonical for a given key set: deletes collapse branches with
//! a single entry and merge adjacent extensions, so incremental updates and a
//! fresh build always agree on the root.
//!
//! Node hashes:
//! - leaf:      `H(0x00 || len || nibbles || value_hash)`
//! - extension: `H(0x01 || len || nibbles || child_hash)`
//! - branch:    `H(0x02 || child_hash[0..16] || has_value || value_hash)`
//!
//! with `len` a 4-byte big-endian nibble count, absent children and values
//! encoded as 32 zero bytes, and the empty trie rooted at zero.

use sha2::{Digest, Sha256};

use crate::hash::Hash256;

const LEAF: u8 = 0;
const EXTENSION: u8 = 1;
const BRANCH: u8 = 2;

pub fn to_nibbles(bytes: &[u8]) -> Vec<u8> {
    let mut out = Vec::with_capacity(bytes.len() * 2);
    for b in bytes {
        out.push(b >> 4);
        out.push(b & 0x0f);
    }
    out
}

#[derive(Debug, Clone)]
enum Node {
    Leaf {
        path: Vec<u8>,
        value: Hash256,
    },
    Extension {
        path: Vec<u8>,
        child: Box<Slot>,
    },
    Branch {
        children: Box<[Option<Box<Slot>>; 16]>,
        value: Option<Hash256>,
    },
}

#[derive(Debug, Clone)]
struct Slot {
    node: Node,
    hash: Option<Hash256>,
}

impl Slot {
    fn boxed(node: Node) -> Box<Slot> {
        Box::new(Slot { node, hash: None })
    }

    fn hash(&mut self) -> Hash256 {
        if let Some(h) = self.hash {
            return h;
        }
        let mut h = Sha256::new();
        match &mut self.node {
            Node::Leaf { path, value } => {
                h.update([LEAF]);
                h.update((path.len() as u32).to_be_bytes());
                h.update(&path[..]);
                h.update(value.0);
            }
            Node::Extension { path, child } => {
                let ch = child.hash();
                h.update([EXTENSION]);
                h.update((path.len() as u32).to_be_bytes());
                h.update(&path[..]);
                h.update(ch.0);
            }
            Node::Branch { children, value } => {
                h.update([BRANCH]);
                for c in children.iter_mut() {
                    match c {
                        Some(c) => h.update(c.hash().0),
                        None => h.update([0u8; 32]),
                    }
                }
                match value {
                    Some(v) => {
                        h.update([1]);
                        h.update(v.0);
                    }
                    None => {
                        h.update([0]);
                        h.update([0u8; 32]);
                    }
                }
            }
        }
        let out = Hash256(h.finalize().into());
        self.hash = Some(out);
        out
    }
}

fn common_prefix(a: &[u8], b: &[u8]) -> usize {
    a.iter().zip(b).take_while(|(x, y)| x == y).count()
}

fn empty_children() -> Box<[Option<Box<Slot>>; 16]> {
    Box::default()
}

/// Place `path -> value` into a fresh branch.
fn branch_put(
    children: &mut [Option<Box<Slot>>; 16],
    value: &mut Option<Hash256>,
    path: &[u8],
    leaf_value: Hash256,
) {
    match path.split_first() {
        None => *value = Some(leaf_value),
        Some((first, rest)) => {
            children[*first as usize] = Some(Slot::boxed(Node::Leaf {
                path: rest.to_vec(),
                value: leaf_value,
            }))
        }
    }
}

fn wrap_with_prefix(prefix: &[u8], node: Node) -> Box<Slot> {
    if prefix.is_empty() {
        Slot::boxed(node)
    } else {
        Slot::boxed(Node::Extension {
            path: prefix.to_vec(),
            child: Slot::boxed(node),
        })
    }
}

fn insert(slot: Option<Box<Slot>>, path: &[u8], value: Hash256) -> Box<Slot> {
    let Some(mut slot) = slot else {
        return Slot::boxed(Node::Leaf {
            path: path.to_vec(),
            value,
        });
    };
    slot.hash = None;
    match slot.node {
        Node::Leaf {
            path: ref lpath,
            value: ref mut lval,
        } if lpath.as_slice() == path => {
            *lval = value;
            slot
        }
        Node::Leaf {
            path: lpath,
            value: lval,
        } => {
            let p = common_prefix(&lpath, path);
            let mut children = empty_children();
            let mut bval = None;
            branch_put(&mut children, &mut bval, &lpath[p..], lval);
            branch_put(&mut children, &mut bval, &path[p..], value);
            wrap_with_prefix(
                &path[..p],
                Node::Branch {
                    children,
                    value: bval,
                },
            )
        }
        Node::Extension { path: epath, child } => {
            let p = common_prefix(&epath, path);
            if p == epath.len() {
                let child = insert(Some(child), &path[p..], value);
                return Slot::boxed(Node::Extension { path: epath, child });
            }
            let mut children = empty_children();
            let idx = epath[p] as usize;
            let rest = &epath[p + 1..];
            children[idx] = Some(if rest.is_empty() {
                child
            } else {
                Slot::boxed(Node::Extension {
                    path: rest.to_vec(),
                    child,
                })
            });
            let mut bval = None;
            branch_put(&mut children, &mut bval, &path[p..], value);
            wrap_with_prefix(
                &path[..p],
                Node::Branch {
                    children,
                    value: bval,
                },
            )
        }
        Node::Branch {
            ref mut children,
            value: ref mut bval,
        } => {
            match path.split_first() {
                None => *bval = Some(value),
                Some((first, rest)) => {
                    let i = *first as usize;
                    children[i] = Some(insert(children[i].take(), rest, value));
                }
            }
            slot
        }
    }
}

/// Prefix `prefix` onto the front of a node, merging where possible.
fn prepend(prefix: Vec<u8>, slot: Box<Slot>) -> Box<Slot> {
    match slot.node {
        Node::Leaf { path, value } => Slot::boxed(Node::Leaf {
            path: [prefix, path].concat(),
            value,
        }),
        Node::Extension { path, child } => Slot::boxed(Node::Extension {
            path: [prefix, path].concat(),
            child,
        }),
        branch @ Node::Branch { .. } => Slot::boxed(Node::Extension {
            path: prefix,
            child: Box::new(Slot {
                node: branch,
                hash: slot.hash,
            }),
        }),
    }
}

fn remove(slot: Option<Box<Slot>>, path: &[u8]) -> (Option<Box<Slot>>, bool) {
    let Some(mut slot) = slot else {
        return (None, false);
    };
    match slot.node {
        Node::Leaf {
            path: ref lpath, ..
        } => {
            if lpath.as_slice() == path {
                (None, true)
            } else {
                (Some(slot), false)
            }
        }
        Node::Extension { path: epath, child } => {
            if !path.starts_with(&epath) {
                return (
                    Some(Box::new(Slot {
                        node: Node::Extension { path: epath, child },
                        hash: slot.hash,
                    })),
                    false,
                );
            }
            let (child, removed) = remove(Some(child), &path[epath.len()..]);
            if !removed {
                return (
                    Some(Box::new(Slot {
                        node: Node::Extension {
                            path: epath,
                            child: child.expect("unchanged child"),
                        },
                        hash: slot.hash,
                    })),
                    false,
                );
            }
            (child.map(|c| prepend(epath, c)), true)
        }
        Node::Branch {
            ref mut children,
            value: ref mut bval,
        } => {
            let removed = match path.split_first() {
                None => bval.take().is_some(),
                Some((first, rest)) => {
                    let i = *first as usize;
                    let (c, r) = remove(children[i].take(), rest);
                    children[i] = c;
                    r
                }
            };
            if !removed {
                return (Some(slot), false);
            }
            slot.hash = None;
            let live: Vec<usize> = (0..16).filter(|i| children[*i].is_some()).collect();
            match (live.len(), *bval) {
                (0, None) => (None, true),
                (0, Some(v)) => (
                    Some(Slot::boxed(Node::Leaf {
                        path: vec![],
                        value: v,
                    })),
                    true,
                ),
                (1, None) => {
                    let i = live[0];
                    let only = children[i].take().unwrap();
                    (Some(prepend(vec![i as u8], only)), true)
                }
                _ => (Some(slot), true),
            }
        }
    }
}

#[derive(Debug, Clone, Default)]
pub struct PatriciaTrie {
    root: Option<Box<Slot>>,
    len: usize,
}

impl PatriciaTrie {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    /// Insert or overwrite the leaf for `key` with `value_hash`.
    pub fn insert(&mut self, key: &[u8], value_hash: Hash256) {
        let path = to_nibbles(key);
        if !self.contains_path(&path) {
            self.len += 1;
        }
        self.root = Some(insert(self.root.take(), &path, value_hash));
    }

    pub fn remove(&mut self, key: &[u8]) -> bool {
        let path = to_nibbles(key);
        let (root, removed) = remove(self.root.take(), &path);
        self.root = root;
        if removed {
            self.len -= 1;
        }
        removed
    }

    fn contains_path(&self, mut path: &[u8]) -> bool {
        let mut cur = self.root.as_deref();
        while let Some(slot) = cur {
            match &slot.node {
                Node::Leaf { path: p, .. } => return p.as_slice() == path,
                Node::Extension { path: p, child } => {
                    if !path.starts_with(p) {
                        return false;
                    }
                    path = &path[p.len()..];
                    cur = Some(child);
                }
                Node::Branch { children, value } => match path.split_first() {
                    None => return value.is_some(),
                    Some((f, rest)) => {
                        cur = children[*f as usize].as_deref();
                        path = rest;
                    }
                },
            }
        }
        false
    }

    pub fn root_hash(&mut self) -> Hash256 {
        match &mut self.root {
            None => Hash256::ZERO,
            Some(s) => s.hash(),
        }
    }
}
