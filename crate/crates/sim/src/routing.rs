//! Reactive routing state: the AODV next-hop table with reverse-path
//! pointers and the DSR route cache, plus duplicate suppression, the
//! bounded send buffer, and route selection. Event-loop glue lives in
//! `engine`; everything here is plain state and rules so it tests
//! standalone (baseline mode needs no trust module).

use std::collections::{BTreeMap, BTreeSet, VecDeque};

use thiserror::Error;

use crate::types::{NodeId, SimTime};

pub const ACTIVE_ROUTE_LIFETIME: f64 = 10.0;
pub const RREQ_RETRY_WAIT: f64 = 1.0;
pub const MAX_DISCOVERY_RETRIES: u32 = 3;
pub const SEND_BUFFER_CAPACITY: usize = 64;
pub const ROUTE_CACHE_CAPACITY: usize = 64;
pub const RREQ_SEEN_CAPACITY: usize = 256;

#[derive(Debug, Error, PartialEq)]
pub enum RoutingError {
    #[error("no admissible route")]
    NoAdmissibleRoute,
}

/// Trust veto hook. Baseline mode plugs in [`AdmitAll`].
pub trait Admissibility {
    fn admissible(&self, subject: NodeId) -> bool;
}

pub struct AdmitAll;

impl Admissibility for AdmitAll {
    fn admissible(&self, _subject: NodeId) -> bool {
        true
    }
}

impl Admissibility for &BTreeSet<NodeId> {
    /// Set of blacklisted nodes.
    fn admissible(&self, subject: NodeId) -> bool {
        !self.contains(&subject)
    }
}

/// AODV forwarding table row.
#[derive(Debug, Clone, PartialEq)]
pub struct RouteEntry {
    pub next_hop: NodeId,
    pub hop_count: u32,
    pub dest_seq: u64,
    pub expires_at: SimTime,
}

/// DSR cache row: full path from this node to the last element.
#[derive(Debug, Clone, PartialEq)]
pub struct RouteCacheEntry {
    pub path: Vec<NodeId>,
    pub learned_at: SimTime,
}

/// Bounded LRU set for duplicate (origin, rreq_id) suppression.
#[derive(Debug, Default)]
pub struct SeenCache {
    order: VecDeque<(NodeId, u64)>,
    set: BTreeSet<(NodeId, u64)>,
}

impl SeenCache {
    /// Returns true when the key was already present.
    pub fn check_and_insert(&mut self, key: (NodeId, u64)) -> bool {
        if self.set.contains(&key) {
            return true;
        }
        self.set.insert(key);
        self.order.push_back(key);
        if self.order.len() > RREQ_SEEN_CAPACITY {
            let evicted = self.order.pop_front().unwrap();
            self.set.remove(&evicted);
        }
        false
    }
}

#[derive(Debug, Clone)]
pub struct BufferedData {
    pub dest: NodeId,
    pub payload_len: u32,
    pub payload_digest: u64,
    pub originated_at: SimTime,
    pub uid: u64,
}

/// Bounded per-node send buffer, oldest dropped on overflow.
#[derive(Debug, Default)]
pub struct SendBuffer {
    queue: VecDeque<BufferedData>,
}

impl SendBuffer {
    /// Push, returning the evicted oldest packet when full.
    pub fn push(&mut self, p: BufferedData) -> Option<BufferedData> {
        let evicted = if self.queue.len() >= SEND_BUFFER_CAPACITY {
            self.queue.pop_front()
        } else {
            None
        };
        self.queue.push_back(p);
        evicted
    }

    pub fn drain_dest(&mut self, dest: NodeId) -> Vec<BufferedData> {
        let mut kept = VecDeque::new();
        let mut taken = Vec::new();
        for p in self.queue.drain(..) {
            if p.dest == dest {
                taken.push(p);
            } else {
                kept.push_back(p);
            }
        }
        self.queue = kept;
        taken
    }

    pub fn has_dest(&self, dest: NodeId) -> bool {
        self.queue.iter().any(|p| p.dest == dest)
    }

    pub fn len(&self) -> usize {
        self.queue.len()
    }

    pub fn is_empty(&self) -> bool {
        self.queue.is_empty()
    }
}

/// Pending route discovery session at an origin.
#[derive(Debug, Clone)]
pub struct Discovery {
    pub rreq_id: u64,
    pub attempt: u32,
}

#[derive(Debug, Default)]
pub struct AodvState {
    pub table: BTreeMap<NodeId, RouteEntry>,
    /// Reverse pointer toward each RREQ origin, from the first copy seen.
    pub reverse: BTreeMap<NodeId, (NodeId, SimTime)>,
    pub own_seq: u64,
    /// dest_seq answered per (origin, rreq_id), so every copy of one
    /// discovery is answered with the same sequence number.
    pub replied: BTreeMap<(NodeId, u64), u64>,
}

impl AodvState {
    /// Valid (unexpired) entry for dest.
    pub fn lookup(&self, dest: NodeId, now: SimTime) -> Option<&RouteEntry> {
        self.table.get(&dest).filter(|e| e.expires_at >= now)
    }

    /// AODV freshness: newer dest_seq wins; on equal seq, fewer hops.
    /// Installed dest_seq never decreases.
    pub fn install_if_fresher(&mut self, dest: NodeId, cand: RouteEntry) -> bool {
        match self.table.get(&dest) {
            Some(cur) if cur.dest_seq > cand.dest_seq => false,
            Some(cur) if cur.dest_seq == cand.dest_seq && cur.hop_count <= cand.hop_count => false,
            _ => {
                self.table.insert(dest, cand);
                true
            }
        }
    }

    pub fn refresh(&mut self, dest: NodeId, now: SimTime) {
        if let Some(e) = self.table.get_mut(&dest) {
            e.expires_at = now.after(ACTIVE_ROUTE_LIFETIME);
        }
    }

    /// Purge entries reached via `next_hop` toward any of `dests`.
    /// Returns the destinations actually purged.
    pub fn purge_via(&mut self, next_hop: NodeId, dests: &[NodeId]) -> Vec<NodeId> {
        let mut purged = Vec::new();
        for d in dests {
            if self.table.get(d).is_some_and(|e| e.next_hop == next_hop) {
                self.table.remove(d);
                purged.push(*d);
            }
        }
        purged
    }

    /// Purge every entry routed via `next_hop` (link-layer failure);
    /// returns the destinations lost.
    pub fn purge_all_via(&mut self, next_hop: NodeId) -> Vec<NodeId> {
        let dests: Vec<NodeId> = self
            .table
            .iter()
            .filter(|(_, e)| e.next_hop == next_hop)
            .map(|(d, _)| *d)
            .collect();
        for d in &dests {
            self.table.remove(d);
        }
        dests
    }

    pub fn reverse_toward(&self, origin: NodeId, now: SimTime) -> Option<NodeId> {
        self.reverse
            .get(&origin)
            .filter(|(_, exp)| *exp >= now)
            .map(|(n, _)| *n)
    }
}

#[derive(Debug, Default)]
pub struct DsrState {
    cache: VecDeque<RouteCacheEntry>,
}

impl DsrState {
    /// Insert a path (self first, dest last), LRU-evicting at capacity.
    pub fn insert(&mut self, path: Vec<NodeId>, now: SimTime) {
        debug_assert!(path.len() >= 2);
        debug_assert!(
            path.iter().collect::<BTreeSet<_>>().len() == path.len(),
            "looped path"
        );
        if let Some(pos) = self.cache.iter().position(|e| e.path == path) {
            self.cache.remove(pos);
        }
        if self.cache.len() >= ROUTE_CACHE_CAPACITY {
            self.cache.pop_front();
        }
        self.cache.push_back(RouteCacheEntry {
            path,
            learned_at: now,
        });
    }

    pub fn candidates(&self, dest: NodeId) -> Vec<&RouteCacheEntry> {
        self.cache
            .iter()
            .filter(|e| e.path.last() == Some(&dest))
            .collect()
    }

    /// Drop every cached path using the directed link broken_from -> broken_to.
    pub fn purge_link(&mut self, broken_from: NodeId, broken_to: NodeId) -> usize {
        let uses_link = |p: &[NodeId]| {
            p.windows(2)
                .any(|w| w[0] == broken_from && w[1] == broken_to)
        };
        let before = self.cache.len();
        self.cache.retain(|e| !uses_link(&e.path));
        before - self.cache.len()
    }

    /// Drop every cached path that visits `node` as an intermediate hop.
    pub fn purge_through(&mut self, node: NodeId) -> usize {
        let before = self.cache.len();
        self.cache
            .retain(|e| !e.path[1..e.path.len() - 1].contains(&node));
        before - self.cache.len()
    }

    pub fn touch(&mut self, path: &[NodeId]) {
        if let Some(pos) = self.cache.iter().position(|e| e.path == path) {
            let e = self.cache.remove(pos).unwrap();
            self.cache.push_back(e);
        }
    }

    pub fn len(&self) -> usize {
        self.cache.len()
    }

    pub fn is_empty(&self) -> bool {
        self.cache.is_empty()
    }
}

/// DSR route selection: drop candidates containing an inadmissible hop,
/// then take minimum hops; ties broken by the lexicographically smallest
/// node-id sequence. Also reports how many admissibility vetoes fired.
pub fn select_route<'a, A: Admissibility>(
    candidates: &[&'a RouteCacheEntry],
    admit: &A,
    rejections: &mut u64,
) -> Result<&'a RouteCacheEntry, RoutingError> {
    let mut admissible: Vec<&RouteCacheEntry> = Vec::new();
    for c in candidates {
        let vetoed = c.path[1..]
            .iter()
            .filter(|n| !admit.admissible(**n))
            .count() as u64;
        if vetoed > 0 {
            *rejections += vetoed;
        } else {
            admissible.push(c);
        }
    }
    admissible
        .into_iter()
        .min_by(|a, b| (a.path.len(), &a.path).cmp(&(b.path.len(), &b.path)))
        .ok_or(RoutingError::NoAdmissibleRoute)
}

/// Per-protocol routing state of one node.
#[derive(Debug)]
pub enum RoutingState {
    Aodv(AodvState),
    Dsr(DsrState),
}
