//! PBFT replica as a step function over a host that owns the chain.
//!
//! One sequence number is in flight at a time: sequence `s` is the height of
//! the block being agreed on, and the next proposal waits for `s` to commit.
//! Every replica, the leader included, broadcasts a prepare; a replica
//! commits a block once it has seen a quorum of prepares and then a quorum of
//! commits for it.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::sync::Arc;

use crate::chain::Block;
use crate::hash::{DecodeError, Decoder, Encoder, Hash256};
use crate::netsim::NodeId;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum PbftKind {
    PrePrepare,
    Prepare,
    Commit,
    ViewChange,
    NewView,
}

impl PbftKind {
    fn tag(self) -> u8 {
        match self {
            PbftKind::PrePrepare => 1,
            PbftKind::Prepare => 2,
            PbftKind::Commit => 3,
            PbftKind::ViewChange => 4,
            PbftKind::NewView => 5,
        }
    }

    fn from_tag(t: u8) -> Result<Self, DecodeError> {
        Ok(match t {
            1 => PbftKind::PrePrepare,
            2 => PbftKind::Prepare,
            3 => PbftKind::Commit,
            4 => PbftKind::ViewChange,
            5 => PbftKind::NewView,
            t => return Err(DecodeError::UnknownTag(t)),
        })
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct PbftMessage {
    pub kind: PbftKind,
    pub view: u64,
    pub seq: u64,
    pub block_digest: Hash256,
    pub sender: NodeId,
    /// View-change votes: the view in which `block` was prepared.
    pub prepared_view: Option<u64>,
    /// Pre-prepare proposal, new-view reproposal, or a vote's prepared block.
    pub block: Option<Arc<Block>>,
}

impl PbftMessage {
    fn vote(kind: PbftKind, view: u64, seq: u64, digest: Hash256, sender: NodeId) -> Self {
        PbftMessage {
            kind,
            view,
            seq,
            block_digest: digest,
            sender,
            prepared_view: None,
            block: None,
        }
    }

    /// `{type, view, seq, block_digest, sender}` followed by the optional
    /// prepared view and block. The MAC is appended by the frame layer.
    pub fn encode(&self, enc: &mut Encoder) {
        enc.u8(self.kind.tag())
            .u64(self.view)
            .u64(self.seq)
            .hash(&self.block_digest)
            .u64(self.sender as u64);
        match self.prepared_view {
            Some(v) => enc.u8(1).u64(v),
            None => enc.u8(0),
        };
        match &self.block {
            Some(b) => {
                enc.u8(1);
                b.encode(enc);
            }
            None => {
                enc.u8(0);
            }
        }
    }

    pub fn decode(dec: &mut Decoder<'_>) -> Result<Self, DecodeError> {
        let kind = PbftKind::from_tag(dec.u8()?)?;
        let view = dec.u64()?;
        let seq = dec.u64()?;
        let block_digest = dec.hash()?;
        let sender = dec.u64()? as NodeId;
        let prepared_view = match dec.u8()? {
            0 => None,
            1 => Some(dec.u64()?),
            t => return Err(DecodeError::UnknownTag(t)),
        };
        let block = match dec.u8()? {
            0 => None,
            1 => Some(Arc::new(Block::decode(dec)?)),
            t => return Err(DecodeError::UnknownTag(t)),
        };
        Ok(PbftMessage {
            kind,
            view,
            seq,
            block_digest,
            sender,
            prepared_view,
            block,
        })
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum PbftTimer {
    Batch { view: u64, seq: u64 },
    Progress { generation: u64 },
}

/// What a replica needs from the node it runs in.
pub trait PbftHost {
    fn broadcast(&mut self, msg: PbftMessage);
    fn send(&mut self, to: NodeId, msg: PbftMessage);
    fn set_timer(&mut self, after: u64, timer: PbftTimer);
    /// Height and id of the last committed block.
    fn committed_tip(&self) -> (u64, Hash256);
    fn pool_len(&self) -> usize;
    /// Assemble and execute a block on the committed tip; `None` if there is
    /// nothing to propose.
    fn build_block(&mut self) -> Option<Block>;
    /// Full validation of a proposal on top of the committed tip.
    fn validate_block(&mut self, block: &Block) -> bool;
    fn commit_block(&mut self, block: Arc<Block>);
    /// Ask `peer` for committed blocks above our committed height.
    fn request_sync(&mut self, peer: NodeId);
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct PbftParams {
    pub nodes: usize,
    pub batch_size: usize,
    pub batch_timeout: u64,
    pub view_timeout: u64,
    pub strict_quorum: bool,
}

/// Tolerated faults for `n` replicas.
pub fn max_faults(n: usize) -> usize {
    n.saturating_sub(1) / 3
}

/// Votes needed to prepare, commit, or install a view.
pub fn quorum(n: usize, strict: bool) -> usize {
    let f = max_faults(n);
    if strict {
        n - f
    } else {
        2 * f + 1
    }
}

#[derive(Debug, Default)]
struct Slot {
    pre_prepare: Option<Hash256>,
    prepares: BTreeMap<Hash256, BTreeSet<NodeId>>,
    commits: BTreeMap<Hash256, BTreeSet<NodeId>>,
    sent_commit: bool,
}

#[derive(Clone, Debug)]
struct Vote {
    seq: u64,
    prepared: Option<(u64, Arc<Block>)>,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct PbftStats {
    pub proposals: u64,
    pub commits: u64,
    pub view_changes_started: u64,
    pub views_installed: u64,
    pub rejected_proposals: u64,
}

#[derive(Debug)]
pub struct PbftReplica {
    id: NodeId,
    params: PbftParams,
    f: usize,
    quorum: usize,
    view: u64,
    in_view_change: bool,
    vc_target: u64,
    vc_attempts: u32,
    /// Keyed by (seq, view) so one sequence's slots are contiguous.
    slots: BTreeMap<(u64, u64), Slot>,
    blocks: HashMap<Hash256, Arc<Block>>,
    prepared: Option<(u64, u64, Arc<Block>)>,
    votes: BTreeMap<u64, BTreeMap<NodeId, Vote>>,
    highest_vote: BTreeMap<NodeId, u64>,
    /// Pre-prepares and new-views that arrived ahead of our state.
    future: BTreeMap<(u64, u64), PbftMessage>,
    outstanding: bool,
    batch_armed: bool,
    progress_generation: u64,
    progress_armed: bool,
    pending_new_view: Option<u64>,
    last_new_view: Option<PbftMessage>,
    byzantine_evidence: u64,
    stats: PbftStats,
}

impl PbftReplica {
    pub fn new(id: NodeId, params: PbftParams) -> Self {
        PbftReplica {
            id,
            params,
            f: max_faults(params.nodes),
            quorum: quorum(params.nodes, params.strict_quorum),
            view: 0,
            in_view_change: false,
            vc_target: 0,
            vc_attempts: 0,
            slots: BTreeMap::new(),
            blocks: HashMap::new(),
            prepared: None,
            votes: BTreeMap::new(),
            highest_vote: BTreeMap::new(),
            future: BTreeMap::new(),
            outstanding: false,
            batch_armed: false,
            progress_generation: 0,
            progress_armed: false,
            pending_new_view: None,
            last_new_view: None,
            byzantine_evidence: 0,
            stats: PbftStats::default(),
        }
    }

    pub fn id(&self) -> NodeId {
        self.id
    }

    pub fn view(&self) -> u64 {
        self.view
    }

    pub fn in_view_change(&self) -> bool {
        self.in_view_change
    }

    pub fn quorum(&self) -> usize {
        self.quorum
    }

    pub fn leader_of(&self, view: u64) -> NodeId {
        (view % self.params.nodes as u64) as NodeId
    }

    pub fn leader(&self) -> NodeId {
        self.leader_of(self.view)
    }

    pub fn is_leader(&self) -> bool {
        self.leader() == self.id
    }

    /// Conflicting pre-prepares seen for one (view, seq).
    pub fn byzantine_evidence(&self) -> u64 {
        self.byzantine_evidence
    }

    pub fn stats(&self) -> PbftStats {
        self.stats
    }

    fn next_seq(&self, host: &dyn PbftHost) -> u64 {
        host.committed_tip().0 + 1
    }

    fn timeout(&self) -> u64 {
        let base = self.params.view_timeout;
        base.saturating_mul(1u64 << self.vc_attempts.min(2))
    }

    fn arm_progress(&mut self, host: &mut dyn PbftHost) {
        self.progress_generation += 1;
        self.progress_armed = true;
        host.set_timer(
            self.timeout(),
            PbftTimer::Progress {
                generation: self.progress_generation,
            },
        );
    }

    fn work_pending(&self, host: &dyn PbftHost) -> bool {
        host.pool_len() > 0 || self.outstanding || self.prepared.is_some()
    }

    pub fn start(&mut self, host: &mut dyn PbftHost) {
        self.maybe_propose(host);
    }

    /// The pool gained transactions.
    pub fn on_pool_change(&mut self, host: &mut dyn PbftHost) {
        if !self.progress_armed && self.work_pending(host) {
            self.arm_progress(host);
        }
        self.maybe_propose(host);
    }

    pub fn on_timer(&mut self, host: &mut dyn PbftHost, timer: PbftTimer) {
        match timer {
            PbftTimer::Batch { view, seq } => {
                self.batch_armed = false;
                if view == self.view && seq == self.next_seq(host) {
                    self.propose(host);
                }
            }
            PbftTimer::Progress { generation } => {
                if generation != self.progress_generation {
                    return;
                }
                self.progress_armed = false;
                if self.in_view_change {
                    let next = self.vc_target + 1;
                    self.start_view_change(host, next);
                } else if self.work_pending(host) {
                    let next = self.view + 1;
                    self.start_view_change(host, next);
                }
            }
        }
    }

    pub fn on_message(&mut self, host: &mut dyn PbftHost, msg: PbftMessage) {
        if msg.sender >= self.params.nodes || msg.sender == self.id {
            return;
        }
        match msg.kind {
            PbftKind::PrePrepare => self.on_pre_prepare(host, msg),
            PbftKind::Prepare => {
                let (v, s, d) = (msg.view, msg.seq, msg.block_digest);
                if s < self.next_seq(host) {
                    return;
                }
                self.slot(s, v)
                    .prepares
                    .entry(d)
                    .or_default()
                    .insert(msg.sender);
                self.check_prepared(host, v, s, d);
            }
            PbftKind::Commit => {
                let (v, s, d) = (msg.view, msg.seq, msg.block_digest);
                if s < self.next_seq(host) {
                    return;
                }
                self.slot(s, v)
                    .commits
                    .entry(d)
                    .or_default()
                    .insert(msg.sender);
                self.check_committed(host, v, s, d);
            }
            PbftKind::ViewChange => self.on_view_change(host, msg),
            PbftKind::NewView => self.on_new_view(host, msg),
        }
    }

    fn slot(&mut self, seq: u64, view: u64) -> &mut Slot {
        self.slots.entry((seq, view)).or_default()
    }

    fn maybe_propose(&mut self, host: &mut dyn PbftHost) {
        if !self.is_leader() || self.in_view_change || self.outstanding {
            return;
        }
        let pool = host.pool_len();
        if pool == 0 {
            return;
        }
        if pool >= self.params.batch_size || self.params.batch_timeout == 0 {
            self.propose(host);
        } else if !self.batch_armed {
            self.batch_armed = true;
            let seq = self.next_seq(host);
            host.set_timer(
                self.params.batch_timeout,
                PbftTimer::Batch {
                    view: self.view,
                    seq,
                },
            );
        }
    }

    fn propose(&mut self, host: &mut dyn PbftHost) {
        if !self.is_leader() || self.in_view_change || self.outstanding {
            return;
        }
        let Some(block) = host.build_block() else {
            return;
        };
        let block = Arc::new(block);
        let seq = self.next_seq(host);
        debug_assert_eq!(block.height(), seq);
        self.stats.proposals += 1;
        let id = block.id();
        let msg = PbftMessage {
            block: Some(block.clone()),
            ..PbftMessage::vote(PbftKind::PrePrepare, self.view, seq, id, self.id)
        };
        host.broadcast(msg);
        self.adopt_proposal(host, self.view, seq, block);
        if !self.progress_armed {
            self.arm_progress(host);
        }
    }

    /// Record an accepted proposal and cast our prepare.
    fn adopt_proposal(&mut self, host: &mut dyn PbftHost, view: u64, seq: u64, block: Arc<Block>) {
        let id = block.id();
        self.blocks.insert(id, block);
        let me = self.id;
        let slot = self.slot(seq, view);
        slot.pre_prepare = Some(id);
        slot.prepares.entry(id).or_default().insert(me);
        if view == self.view {
            self.outstanding = true;
        }
        host.broadcast(PbftMessage::vote(PbftKind::Prepare, view, seq, id, me));
        self.check_prepared(host, view, seq, id);
    }

    fn on_pre_prepare(&mut self, host: &mut dyn PbftHost, msg: PbftMessage) {
        let (v, s) = (msg.view, msg.seq);
        if msg.sender != self.leader_of(v) {
            return;
        }
        let next = self.next_seq(host);
        if s < next {
            return;
        }
        if v > self.view || (v == self.view && self.in_view_change) || s > next {
            if s > next {
                host.request_sync(msg.sender);
            }
            self.future.insert((s, v), msg);
            return;
        }
        if v < self.view {
            return;
        }
        let Some(block) = msg.block.clone() else {
            return;
        };
        if block.id() != msg.block_digest || block.height() != s {
            return;
        }
        self.accept_pre_prepare(host, v, s, block);
    }

    fn accept_pre_prepare(
        &mut self,
        host: &mut dyn PbftHost,
        view: u64,
        seq: u64,
        block: Arc<Block>,
    ) {
        let id = block.id();
        if let Some(existing) = self.slot(seq, view).pre_prepare {
            if existing != id {
                self.byzantine_evidence += 1;
            }
            return;
        }
        if !host.validate_block(&block) {
            self.stats.rejected_proposals += 1;
            return;
        }
        self.adopt_proposal(host, view, seq, block);
        if !self.progress_armed {
            self.arm_progress(host);
        }
    }

    fn check_prepared(&mut self, host: &mut dyn PbftHost, view: u64, seq: u64, digest: Hash256) {
        let quorum = self.quorum;
        let me = self.id;
        let slot = self.slot(seq, view);
        if slot.sent_commit
            || slot.pre_prepare != Some(digest)
            || slot.prepares.get(&digest).map_or(0, BTreeSet::len) < quorum
        {
            return;
        }
        slot.sent_commit = true;
        slot.commits.entry(digest).or_default().insert(me);
        if let Some(block) = self.blocks.get(&digest).cloned() {
            if self
                .prepared
                .as_ref()
                .is_none_or(|(pv, ps, _)| (seq, view) > (*ps, *pv))
            {
                self.prepared = Some((view, seq, block));
            }
        }
        host.broadcast(PbftMessage::vote(PbftKind::Commit, view, seq, digest, me));
        self.check_committed(host, view, seq, digest);
    }

    fn check_committed(&mut self, host: &mut dyn PbftHost, view: u64, seq: u64, digest: Hash256) {
        if seq != self.next_seq(host) {
            return;
        }
        let quorum = self.quorum;
        let me = self.id;
        let Some(voters) = self
            .slots
            .get(&(seq, view))
            .and_then(|s| s.commits.get(&digest))
        else {
            return;
        };
        if voters.len() < quorum {
            return;
        }
        match self.blocks.get(&digest).cloned() {
            Some(block) => {
                host.commit_block(block);
                self.stats.commits += 1;
                self.after_commit(host);
            }
            None => {
                if let Some(peer) = voters.iter().find(|p| **p != me) {
                    host.request_sync(*peer);
                }
            }
        }
    }

    /// The committed height advanced, through consensus or a sync.
    pub fn after_commit(&mut self, host: &mut dyn PbftHost) {
        let next = self.next_seq(host);
        if self.prepared.as_ref().is_some_and(|(_, s, _)| *s < next) {
            self.prepared = None;
        }
        self.outstanding = false;
        self.vc_attempts = 0;
        self.arm_progress(host);

        if let Some(w) = self.pending_new_view {
            if self.in_view_change && self.vc_target == w {
                self.try_new_view(host, w);
            } else {
                self.pending_new_view = None;
            }
        }

        // Replay proposals that were waiting for this height.
        let ready: Vec<(u64, u64)> = self
            .future
            .range((next, 0)..(next + 1, 0))
            .map(|(k, _)| *k)
            .collect();
        for key in ready {
            if let Some(msg) = self.future.remove(&key) {
                match msg.kind {
                    PbftKind::NewView => self.on_new_view(host, msg),
                    _ => self.on_pre_prepare(host, msg),
                }
            }
        }
        self.future.retain(|(s, _), _| *s >= next);

        // Votes for the new height may already form quorums.
        let keys: Vec<(u64, Vec<Hash256>)> = self
            .slots
            .range((next, 0)..(next + 1, 0))
            .map(|((_, v), slot)| (*v, slot.commits.keys().copied().collect()))
            .collect();
        for (v, digests) in keys {
            for d in digests {
                if self.next_seq(host) != next {
                    return;
                }
                self.check_committed(host, v, next, d);
            }
        }
        self.maybe_propose(host);
    }

    fn start_view_change(&mut self, host: &mut dyn PbftHost, target: u64) {
        if target <= self.view || (self.in_view_change && target <= self.vc_target) {
            return;
        }
        self.in_view_change = true;
        self.vc_target = target;
        self.vc_attempts = self.vc_attempts.saturating_add(1);
        self.stats.view_changes_started += 1;
        self.outstanding = false;
        let seq = self.next_seq(host);
        let prepared = self
            .prepared
            .as_ref()
            .filter(|(_, s, _)| *s == seq)
            .map(|(v, _, b)| (*v, b.clone()));
        let msg = PbftMessage {
            prepared_view: prepared.as_ref().map(|(v, _)| *v),
            block: prepared.as_ref().map(|(_, b)| b.clone()),
            ..PbftMessage::vote(
                PbftKind::ViewChange,
                target,
                seq,
                prepared.as_ref().map_or(Hash256::ZERO, |(_, b)| b.id()),
                self.id,
            )
        };
        self.votes
            .entry(target)
            .or_default()
            .insert(self.id, Vote { seq, prepared });
        host.broadcast(msg);
        self.arm_progress(host);
        self.try_new_view(host, target);
    }

    fn on_view_change(&mut self, host: &mut dyn PbftHost, msg: PbftMessage) {
        let w = msg.view;
        if w <= self.view {
            // A lagging replica; the current leader repeats its new-view.
            if !self.in_view_change && self.is_leader() && w == self.view {
                if let Some(nv) = self.last_new_view.clone() {
                    host.send(msg.sender, nv);
                }
            }
            return;
        }
        let prepared = match (msg.prepared_view, msg.block) {
            (Some(v), Some(b)) if b.id() == msg.block_digest && b.height() == msg.seq => {
                Some((v, b))
            }
            _ => None,
        };
        self.votes.entry(w).or_default().insert(
            msg.sender,
            Vote {
                seq: msg.seq,
                prepared,
            },
        );
        let hv = self.highest_vote.entry(msg.sender).or_insert(0);
        *hv = (*hv).max(w);

        // Join once f + 1 replicas have moved past our view.
        let mine = if self.in_view_change {
            self.vc_target
        } else {
            self.view
        };
        let ahead: Vec<u64> = self
            .highest_vote
            .values()
            .copied()
            .filter(|v| *v > mine)
            .collect();
        if ahead.len() > self.f {
            let join = *ahead.iter().min().expect("non-empty");
            self.start_view_change(host, join);
        }
        self.try_new_view(host, w);
    }

    fn try_new_view(&mut self, host: &mut dyn PbftHost, w: u64) {
        if self.leader_of(w) != self.id || !self.in_view_change || self.vc_target != w {
            return;
        }
        let Some(votes) = self.votes.get(&w) else {
            return;
        };
        if votes.len() < self.quorum {
            return;
        }
        let next = self.next_seq(host);
        let (ahead_peer, max_seq) = votes
            .iter()
            .map(|(p, v)| (*p, v.seq))
            .max_by_key(|(p, s)| (*s, std::cmp::Reverse(*p)))
            .expect("quorum is non-empty");
        if max_seq > next {
            self.pending_new_view = Some(w);
            host.request_sync(ahead_peer);
            return;
        }
        self.pending_new_view = None;
        let reproposal = votes
            .values()
            .filter(|v| v.seq == next)
            .filter_map(|v| v.prepared.clone())
            .max_by(|(va, ba), (vb, bb)| va.cmp(vb).then(bb.id().cmp(&ba.id())))
            .map(|(_, b)| b);
        self.install_view(w);
        let msg = PbftMessage {
            block: reproposal.clone(),
            ..PbftMessage::vote(
                PbftKind::NewView,
                w,
                next,
                reproposal.as_ref().map_or(Hash256::ZERO, |b| b.id()),
                self.id,
            )
        };
        self.last_new_view = Some(msg.clone());
        host.broadcast(msg);
        self.arm_progress(host);
        match reproposal {
            Some(block) => self.adopt_proposal(host, w, next, block),
            None => self.maybe_propose(host),
        }
    }

    fn install_view(&mut self, w: u64) {
        self.view = w;
        self.in_view_change = false;
        self.outstanding = false;
        self.batch_armed = false;
        self.stats.views_installed += 1;
        self.votes = self.votes.split_off(&(w + 1));
        self.highest_vote.retain(|_, v| *v > w);
    }

    fn on_new_view(&mut self, host: &mut dyn PbftHost, msg: PbftMessage) {
        let w = msg.view;
        if w < self.view
            || (w == self.view && !self.in_view_change)
            || msg.sender != self.leader_of(w)
        {
            return;
        }
        let next = self.next_seq(host);
        if msg.seq > next {
            host.request_sync(msg.sender);
            self.future.insert((msg.seq, w), msg);
            return;
        }
        self.install_view(w);
        self.arm_progress(host);
        if msg.seq == next {
            if let Some(block) = msg.block.clone() {
                if block.id() == msg.block_digest && block.height() == next {
                    self.accept_pre_prepare(host, w, next, block);
                }
            }
        }
        let ready: Vec<(u64, u64)> = self
            .future
            .range((next, w)..=(next, w))
            .map(|(k, _)| *k)
            .collect();
        for key in ready {
            if let Some(m) = self.future.remove(&key) {
                if m.kind == PbftKind::PrePrepare {
                    self.on_pre_prepare(host, m);
                }
            }
        }
    }
}
