//! Virtual-clock message fabric with injectable faults.
//!
//! One tick is one simulated millisecond. Events are ordered by
//! `(tick, insertion seq)`, and all randomness comes from a single seeded
//! ChaCha8 stream, so a (topology, policy, seed) triple fixes the trace.

mod trace;

use std::cmp::Ordering;
use std::collections::{BTreeSet, BinaryHeap};

use bytes::Bytes;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::hash::{sha256, Hash256};

pub use trace::{TraceKind, TraceRecord, TraceRecorder};

pub type NodeId = usize;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct NetConfig {
    pub base_latency: u64,
    /// Inclusive uniform jitter range added to every delivery.
    pub jitter: (u64, u64),
    /// Messages queued toward one destination before further ones drop.
    pub inbox_capacity: usize,
}

impl Default for NetConfig {
    fn default() -> Self {
        NetConfig {
            base_latency: 1,
            jitter: (0, 5),
            inbox_capacity: 4096,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Crash {
    pub node: NodeId,
    pub at: u64,
}

/// Extra latency on the link between `a` and `b`, either direction.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LinkDelay {
    pub a: NodeId,
    pub b: NodeId,
    pub min: u64,
    pub max: u64,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Partition {
    pub group_a: BTreeSet<NodeId>,
    pub group_b: BTreeSet<NodeId>,
    pub start: u64,
    pub duration: u64,
}

impl Partition {
    pub fn active_at(&self, tick: u64) -> bool {
        tick >= self.start && tick < self.start.saturating_add(self.duration)
    }

    pub fn end(&self) -> u64 {
        self.start.saturating_add(self.duration)
    }

    fn separates(&self, x: NodeId, y: NodeId) -> bool {
        (self.group_a.contains(&x) && self.group_b.contains(&y))
            || (self.group_b.contains(&x) && self.group_a.contains(&y))
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct FaultPolicy {
    pub crashes: Vec<Crash>,
    pub delays: Vec<LinkDelay>,
    pub corrupt_prob: f64,
    pub partitions: Vec<Partition>,
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum NetError {
    #[error("node {0} appears in both partition groups")]
    OverlappingGroups(NodeId),
    #[error("node {node} out of range (fabric has {nodes})")]
    UnknownNode { node: NodeId, nodes: usize },
    #[error("probability {0} outside [0, 1]")]
    BadProbability(String),
    #[error("link delay range {min}..={max} is empty")]
    BadDelay { min: u64, max: u64 },
}

impl FaultPolicy {
    pub fn validate(&self, nodes: usize) -> Result<(), NetError> {
        let check = |node: NodeId| {
            if node < nodes {
                Ok(())
            } else {
                Err(NetError::UnknownNode { node, nodes })
            }
        };
        if !(0.0..=1.0).contains(&self.corrupt_prob) {
            return Err(NetError::BadProbability(self.corrupt_prob.to_string()));
        }
        for c in &self.crashes {
            check(c.node)?;
        }
        for d in &self.delays {
            check(d.a)?;
            check(d.b)?;
            if d.min > d.max {
                return Err(NetError::BadDelay {
                    min: d.min,
                    max: d.max,
                });
            }
        }
        for p in &self.partitions {
            for n in p.group_a.iter().chain(&p.group_b) {
                check(*n)?;
            }
            if let Some(n) = p.group_a.intersection(&p.group_b).next() {
                return Err(NetError::OverlappingGroups(*n));
            }
        }
        Ok(())
    }
}

#[derive(Clone, Debug)]
pub struct Envelope {
    pub from: NodeId,
    pub to: NodeId,
    pub payload: Bytes,
    pub send_tick: u64,
    /// Digest of the payload as sent, before any corruption.
    pub digest: Hash256,
}

#[derive(Clone, Debug)]
pub enum Event<T> {
    Deliver(Envelope),
    Timer { owner: NodeId, timer: T },
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum SendOutcome {
    Scheduled { at: u64 },
    Dropped,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct FabricStats {
    pub sent: u64,
    pub delivered: u64,
    pub dropped_partition: u64,
    pub dropped_crash: u64,
    pub dropped_inbox: u64,
    pub corrupted: u64,
}

struct Scheduled<T> {
    tick: u64,
    seq: u64,
    event: Event<T>,
}

impl<T> PartialEq for Scheduled<T> {
    fn eq(&self, other: &Self) -> bool {
        (self.tick, self.seq) == (other.tick, other.seq)
    }
}

impl<T> Eq for Scheduled<T> {}

impl<T> PartialOrd for Scheduled<T> {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl<T> Ord for Scheduled<T> {
    // BinaryHeap is a max-heap; invert so the earliest (tick, seq) pops first.
    fn cmp(&self, other: &Self) -> Ordering {
        (other.tick, other.seq).cmp(&(self.tick, self.seq))
    }
}

pub struct Fabric<T> {
    nodes: usize,
    now: u64,
    seq: u64,
    queue: BinaryHeap<Scheduled<T>>,
    rng: ChaCha8Rng,
    config: NetConfig,
    policy: FaultPolicy,
    crash_at: Vec<Option<u64>>,
    inflight: Vec<usize>,
    stats: FabricStats,
    trace: TraceRecorder,
}

impl<T> Fabric<T> {
    pub fn new(nodes: usize, config: NetConfig, seed: u64) -> Self {
        Fabric {
            nodes,
            now: 0,
            seq: 0,
            queue: BinaryHeap::new(),
            rng: ChaCha8Rng::seed_from_u64(seed),
            config,
            policy: FaultPolicy::default(),
            crash_at: vec![None; nodes],
            inflight: vec![0; nodes],
            stats: FabricStats::default(),
            trace: TraceRecorder::default(),
        }
    }

    /// Install every fault in `policy` after validating it.
    pub fn with_policy(mut self, policy: FaultPolicy) -> Result<Self, NetError> {
        policy.validate(self.nodes)?;
        for c in &policy.crashes {
            self.crash_node(c.node, c.at);
        }
        for p in &policy.partitions {
            self.inject_partition(p.group_a.clone(), p.group_b.clone(), p.start, p.duration)?;
        }
        self.policy.delays = policy.delays;
        self.policy.corrupt_prob = policy.corrupt_prob;
        Ok(self)
    }

    pub fn set_trace(&mut self, trace: TraceRecorder) {
        self.trace = trace;
    }

    pub fn trace(&self) -> &TraceRecorder {
        &self.trace
    }

    pub fn trace_mut(&mut self) -> &mut TraceRecorder {
        &mut self.trace
    }

    pub fn nodes(&self) -> usize {
        self.nodes
    }

    pub fn now(&self) -> u64 {
        self.now
    }

    pub fn stats(&self) -> FabricStats {
        self.stats
    }

    pub fn policy(&self) -> &FaultPolicy {
        &self.policy
    }

    pub fn rng(&mut self) -> &mut ChaCha8Rng {
        &mut self.rng
    }

    pub fn pending_events(&self) -> usize {
        self.queue.len()
    }

    /// Earliest scheduled event tick, if any.
    pub fn next_tick(&self) -> Option<u64> {
        self.queue.peek().map(|s| s.tick)
    }

    pub fn crash_node(&mut self, node: NodeId, at: u64) {
        let slot = &mut self.crash_at[node];
        *slot = Some(slot.map_or(at, |t| t.min(at)));
        if !self
            .policy
            .crashes
            .iter()
            .any(|c| c.node == node && c.at == at)
        {
            self.policy.crashes.push(Crash { node, at });
        }
    }

    pub fn crash_tick(&self, node: NodeId) -> Option<u64> {
        self.crash_at[node]
    }

    pub fn is_crashed_at(&self, node: NodeId, tick: u64) -> bool {
        self.crash_at[node].is_some_and(|t| tick >= t)
    }

    pub fn is_crashed(&self, node: NodeId) -> bool {
        self.is_crashed_at(node, self.now)
    }

    /// Drop traffic between the groups during `[start, start + duration)`.
    pub fn inject_partition(
        &mut self,
        group_a: BTreeSet<NodeId>,
        group_b: BTreeSet<NodeId>,
        start: u64,
        duration: u64,
    ) -> Result<(), NetError> {
        if let Some(n) = group_a.intersection(&group_b).next() {
            return Err(NetError::OverlappingGroups(*n));
        }
        for n in group_a.iter().chain(&group_b) {
            if *n >= self.nodes {
                return Err(NetError::UnknownNode {
                    node: *n,
                    nodes: self.nodes,
                });
            }
        }
        if duration == 0 {
            return Ok(());
        }
        self.policy.partitions.push(Partition {
            group_a,
            group_b,
            start,
            duration,
        });
        Ok(())
    }

    pub fn is_partitioned(&self, a: NodeId, b: NodeId, tick: u64) -> bool {
        self.policy
            .partitions
            .iter()
            .any(|p| p.active_at(tick) && p.separates(a, b))
    }

    fn sample_delay(&mut self, from: NodeId, to: NodeId) -> u64 {
        let (lo, hi) = self.config.jitter;
        let mut d = self.config.base_latency + self.rng.gen_range(lo..=hi.max(lo));
        for i in 0..self.policy.delays.len() {
            let l = &self.policy.delays[i];
            if (l.a == from && l.b == to) || (l.a == to && l.b == from) {
                let (min, max) = (l.min, l.max);
                d += self.rng.gen_range(min..=max);
            }
        }
        d
    }

    fn push(&mut self, tick: u64, event: Event<T>) {
        self.seq += 1;
        self.queue.push(Scheduled {
            tick,
            seq: self.seq,
            event,
        });
    }

    /// Send with a precomputed payload digest. `extra_delay` models sender-side
    /// processing time before the message leaves.
    pub fn send_with_digest(
        &mut self,
        from: NodeId,
        to: NodeId,
        payload: Bytes,
        digest: Hash256,
        extra_delay: u64,
    ) -> SendOutcome {
        let now = self.now;
        self.stats.sent += 1;
        self.trace.record(now, TraceKind::Send, from, to, &digest);
        if self.is_crashed(from) || self.is_crashed(to) {
            self.stats.dropped_crash += 1;
            self.trace
                .record(now, TraceKind::DropCrash, from, to, &digest);
            return SendOutcome::Dropped;
        }
        if self.is_partitioned(from, to, now) {
            self.stats.dropped_partition += 1;
            self.trace
                .record(now, TraceKind::DropPartition, from, to, &digest);
            return SendOutcome::Dropped;
        }
        if self.inflight[to] >= self.config.inbox_capacity {
            self.stats.dropped_inbox += 1;
            self.trace
                .record(now, TraceKind::DropInbox, from, to, &digest);
            return SendOutcome::Dropped;
        }
        let payload = if self.policy.corrupt_prob > 0.0
            && !payload.is_empty()
            && self.rng.gen_bool(self.policy.corrupt_prob)
        {
            self.stats.corrupted += 1;
            let mut raw = payload.to_vec();
            let idx = self.rng.gen_range(0..raw.len());
            raw[idx] ^= self.rng.gen_range(1..=255u8);
            self.trace
                .record(now, TraceKind::Corrupt, from, to, &digest);
            Bytes::from(raw)
        } else {
            payload
        };
        let at = now + extra_delay + self.sample_delay(from, to);
        self.inflight[to] += 1;
        self.push(
            at,
            Event::Deliver(Envelope {
                from,
                to,
                payload,
                send_tick: now,
                digest,
            }),
        );
        SendOutcome::Scheduled { at }
    }

    pub fn send(
        &mut self,
        from: NodeId,
        to: NodeId,
        payload: Bytes,
        extra_delay: u64,
    ) -> SendOutcome {
        let digest = sha256(&payload);
        self.send_with_digest(from, to, payload, digest, extra_delay)
    }

    /// Send to every other node; the payload digest is computed once.
    pub fn broadcast(&mut self, from: NodeId, payload: Bytes, extra_delay: u64) {
        let digest = sha256(&payload);
        for to in 0..self.nodes {
            if to != from {
                self.send_with_digest(from, to, payload.clone(), digest, extra_delay);
            }
        }
    }

    pub fn schedule_timer(&mut self, owner: NodeId, after: u64, timer: T) {
        let at = self.now + after;
        self.push(at, Event::Timer { owner, timer });
    }

    /// Pop the next live event at or before `until`, advancing the clock.
    /// Drops deliveries that became undeliverable in flight and timers of
    /// crashed owners. Returns `None` once nothing remains before `until`;
    /// the clock is then left at `until`.
    pub fn next_event(&mut self, until: u64) -> Option<Event<T>> {
        while let Some(top) = self.queue.peek() {
            if top.tick > until {
                break;
            }
            let s = self.queue.pop().expect("peeked");
            self.now = s.tick;
            match s.event {
                Event::Deliver(env) => {
                    self.inflight[env.to] -= 1;
                    if self.is_crashed(env.to) || self.is_crashed_at(env.from, env.send_tick) {
                        self.stats.dropped_crash += 1;
                        self.trace.record(
                            self.now,
                            TraceKind::DropCrash,
                            env.from,
                            env.to,
                            &env.digest,
                        );
                        continue;
                    }
                    if self.is_partitioned(env.from, env.to, self.now) {
                        self.stats.dropped_partition += 1;
                        self.trace.record(
                            self.now,
                            TraceKind::DropPartition,
                            env.from,
                            env.to,
                            &env.digest,
                        );
                        continue;
                    }
                    self.stats.delivered += 1;
                    self.trace
                        .record(self.now, TraceKind::Deliver, env.from, env.to, &env.digest);
                    return Some(Event::Deliver(env));
                }
                Event::Timer { owner, timer } => {
                    if self.is_crashed(owner) {
                        continue;
                    }
                    return Some(Event::Timer { owner, timer });
                }
            }
        }
        if until > self.now && until != u64::MAX {
            self.now = until;
        }
        None
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn fabric(n: usize) -> Fabric<()> {
        Fabric::new(n, NetConfig::default(), 7)
    }

    fn drain(f: &mut Fabric<()>, until: u64) -> Vec<Envelope> {
        let mut out = Vec::new();
        while let Some(e) = f.next_event(until) {
            if let Event::Deliver(env) = e {
                out.push(env);
            }
        }
        out
    }

    fn halves() -> (BTreeSet<NodeId>, BTreeSet<NodeId>) {
        ((0..4).collect(), (4..8).collect())
    }

    #[test]
    fn empty_fabric_has_no_events() {
        let mut f = fabric(3);
        assert!(f.next_event(1000).is_none());
        assert_eq!(f.now(), 1000);
        assert_eq!(f.trace().count(), 0);
    }

    #[test]
    fn delivery_respects_base_latency_and_jitter() {
        let mut f = fabric(2);
        for _ in 0..200 {
            f.send(0, 1, Bytes::from_static(b"x"), 0);
        }
        drain(&mut f, 100);
        assert_eq!(f.stats().delivered, 200);
        let mut g = fabric(2);
        match g.send(0, 1, Bytes::from_static(b"x"), 3) {
            SendOutcome::Scheduled { at } => assert!((4..=9).contains(&at)),
            SendOutcome::Dropped => panic!("dropped"),
        }
    }

    #[test]
    fn equal_ticks_deliver_fifo() {
        let cfg = NetConfig {
            jitter: (0, 0),
            ..NetConfig::default()
        };
        let mut f: Fabric<()> = Fabric::new(2, cfg, 1);
        for i in 0..10u8 {
            f.send(0, 1, Bytes::from(vec![i]), 0);
        }
        let got: Vec<u8> = drain(&mut f, 10).iter().map(|e| e.payload[0]).collect();
        assert_eq!(got, (0..10).collect::<Vec<_>>());
    }

    #[test]
    fn partition_drops_then_heals() {
        let mut f = fabric(8);
        let (a, b) = halves();
        f.inject_partition(a, b, 100, 50).unwrap();
        f.next_event(120);
        assert_eq!(
            f.send(0, 5, Bytes::from_static(b"p"), 0),
            SendOutcome::Dropped
        );
        assert!(matches!(
            f.send(0, 1, Bytes::from_static(b"p"), 0),
            SendOutcome::Scheduled { .. }
        ));
        f.next_event(150);
        drain(&mut f, 150);
        assert!(matches!(
            f.send(0, 5, Bytes::from_static(b"p"), 0),
            SendOutcome::Scheduled { .. }
        ));
        assert_eq!(drain(&mut f, 200).len(), 1);
    }

    #[test]
    fn in_flight_message_dropped_when_partition_starts() {
        let cfg = NetConfig {
            base_latency: 10,
            jitter: (0, 0),
            ..NetConfig::default()
        };
        let mut f: Fabric<()> = Fabric::new(8, cfg, 1);
        let (a, b) = halves();
        f.inject_partition(a, b, 5, 100).unwrap();
        f.send(0, 5, Bytes::from_static(b"p"), 0);
        assert!(drain(&mut f, 50).is_empty());
        assert_eq!(f.stats().dropped_partition, 1);
    }

    #[test]
    fn zero_duration_partition_is_noop() {
        let mut f = fabric(8);
        let (a, b) = halves();
        f.inject_partition(a, b, 0, 0).unwrap();
        assert!(f.policy().partitions.is_empty());
        assert!(matches!(
            f.send(0, 5, Bytes::from_static(b"p"), 0),
            SendOutcome::Scheduled { .. }
        ));
    }

    #[test]
    fn overlapping_groups_rejected() {
        let mut f = fabric(8);
        let err = f
            .inject_partition([0, 1].into(), [1, 2].into(), 0, 10)
            .unwrap_err();
        assert_eq!(err, NetError::OverlappingGroups(1));
    }

    #[test]
    fn sequential_partitions_audit() {
        let mut f = fabric(8);
        let windows = [(100u64, 50u64), (300, 20), (500, 100)];
        for (s, d) in windows {
            let (a, b) = halves();
            f.inject_partition(a, b, s, d).unwrap();
        }
        let mut log = Vec::new();
        for t in (0..700).step_by(3) {
            while let Some(e) = f.next_event(t) {
                if let Event::Deliver(env) = e {
                    log.push((f.now(), env.from, env.to));
                }
            }
            f.send(
                t as usize % 8,
                (t as usize + 3) % 8,
                Bytes::from_static(b"m"),
                0,
            );
        }
        drain(&mut f, 800)
            .iter()
            .for_each(|env| log.push((800, env.from, env.to)));
        let inside = |t: u64| windows.iter().any(|(s, d)| t >= *s && t < s + d);
        let cross = |a: usize, b: usize| (a < 4) != (b < 4);
        assert!(log.iter().all(|(t, a, b)| !(inside(*t) && cross(*a, *b))));
        assert!(log.iter().any(|(t, a, b)| !inside(*t) && cross(*a, *b)));
    }

    #[test]
    fn crashed_node_neither_sends_nor_receives() {
        let mut f = fabric(3);
        f.crash_node(2, 10);
        f.next_event(10);
        assert_eq!(
            f.send(0, 2, Bytes::from_static(b"x"), 0),
            SendOutcome::Dropped
        );
        assert_eq!(
            f.send(2, 0, Bytes::from_static(b"x"), 0),
            SendOutcome::Dropped
        );
        f.schedule_timer(2, 5, ());
        assert!(f.next_event(100).is_none());
    }

    #[test]
    fn message_to_node_crashing_in_flight_is_dropped() {
        let cfg = NetConfig {
            base_latency: 10,
            jitter: (0, 0),
            ..NetConfig::default()
        };
        let mut f: Fabric<()> = Fabric::new(2, cfg, 1);
        f.crash_node(1, 5);
        f.send(0, 1, Bytes::from_static(b"x"), 0);
        assert!(drain(&mut f, 50).is_empty());
    }

    #[test]
    fn corruption_rate_matches_probability() {
        let mut f = fabric(2).with_policy(FaultPolicy {
            corrupt_prob: 0.1,
            ..FaultPolicy::default()
        });
        let f = f.as_mut().unwrap();
        let payload = Bytes::from(vec![0u8; 64]);
        let mut flipped = 0;
        for _ in 0..10 {
            for _ in 0..1000 {
                f.send(0, 1, payload.clone(), 0);
            }
            let until = f.now() + 100;
            flipped += drain(f, until)
                .iter()
                .filter(|e| e.payload != payload)
                .count();
        }
        let frac = flipped as f64 / 10_000.0;
        assert!((0.09..=0.11).contains(&frac), "{frac}");
        assert_eq!(f.stats().corrupted as usize, flipped);
    }

    #[test]
    fn inbox_overflow_drops() {
        let cfg = NetConfig {
            inbox_capacity: 3,
            ..NetConfig::default()
        };
        let mut f: Fabric<()> = Fabric::new(2, cfg, 1);
        for _ in 0..5 {
            f.send(0, 1, Bytes::from_static(b"x"), 0);
        }
        assert_eq!(f.stats().dropped_inbox, 2);
        assert_eq!(drain(&mut f, 100).len(), 3);
    }

    #[test]
    fn link_delay_applies_both_directions() {
        let cfg = NetConfig {
            base_latency: 1,
            jitter: (0, 0),
            ..NetConfig::default()
        };
        let policy = FaultPolicy {
            delays: vec![LinkDelay {
                a: 0,
                b: 1,
                min: 50,
                max: 50,
            }],
            ..FaultPolicy::default()
        };
        let mut f: Fabric<()> = Fabric::new(3, cfg, 1).with_policy(policy).unwrap();
        assert_eq!(
            f.send(1, 0, Bytes::from_static(b"x"), 0),
            SendOutcome::Scheduled { at: 51 }
        );
        assert_eq!(
            f.send(0, 2, Bytes::from_static(b"x"), 0),
            SendOutcome::Scheduled { at: 1 }
        );
    }

    #[test]
    fn same_seed_same_trace() {
        let run = |seed| {
            let mut f: Fabric<()> = Fabric::new(4, NetConfig::default(), seed);
            for i in 0..500usize {
                f.send(
                    i % 4,
                    (i * 7 + 1) % 4,
                    Bytes::from(i.to_be_bytes().to_vec()),
                    0,
                );
                if i % 10 == 0 {
                    let until = f.now() + 2;
                    drain(&mut f, until);
                }
            }
            drain(&mut f, u64::MAX);
            f.trace().digest()
        };
        assert_eq!(run(3), run(3));
        assert_ne!(run(3), run(4));
    }
}
