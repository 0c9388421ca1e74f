//! Consistent-hash placement ring with fault-domain-distinct, load-biased
//! replica selection.

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use super::membership::{MembershipTable, NodeId, NodeState};
use crate::error::{Error, Result};
use crate::model::{hash64, ObjectUri};

pub const DEFAULT_VNODES: usize = 128;

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct PlacementRing {
    vnodes: Vec<(u64, NodeId)>,
    vnodes_per_node: usize,
}

/// Position of virtual node `index` of `node`: `hash64(node_id || index)`
/// with both integers big-endian.
pub fn vnode_position(node: NodeId, index: u32) -> u64 {
    let mut buf = [0u8; 12];
    buf[..8].copy_from_slice(&node.0.to_be_bytes());
    buf[8..].copy_from_slice(&index.to_be_bytes());
    hash64(&buf)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum RingChange {
    Add(NodeId),
    Remove(NodeId),
}

#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct RemapReport {
    /// (key, old primary, new primary) for every key whose primary changed.
    pub moved: Vec<(ObjectUri, Option<NodeId>, Option<NodeId>)>,
    pub total: usize,
}

impl RemapReport {
    pub fn fraction(&self) -> f64 {
        if self.total == 0 {
            0.0
        } else {
            self.moved.len() as f64 / self.total as f64
        }
    }
}

/// Chosen replica set for one key.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Placement {
    pub nodes: Vec<NodeId>,
    /// True when fewer fault domains than replicas were available and a
    /// domain had to be reused.
    pub degraded: bool,
}

/// What placement needs to know about a candidate node.
pub struct Candidate<'a> {
    pub fault_domain: &'a str,
    pub load: f64,
}

impl PlacementRing {
    pub fn new(vnodes_per_node: usize) -> Self {
        Self { vnodes: Vec::new(), vnodes_per_node }
    }

    pub fn build(nodes: impl IntoIterator<Item = NodeId>, vnodes_per_node: usize) -> Self {
        let mut ring = Self::new(vnodes_per_node);
        for n in nodes {
            ring.insert(n);
        }
        ring
    }

    pub fn vnodes_per_node(&self) -> usize {
        self.vnodes_per_node
    }

    pub fn vnodes(&self) -> &[(u64, NodeId)] {
        &self.vnodes
    }

    pub fn nodes(&self) -> BTreeSet<NodeId> {
        self.vnodes.iter().map(|(_, n)| *n).collect()
    }

    pub fn contains(&self, node: NodeId) -> bool {
        self.vnodes.iter().any(|(_, n)| *n == node)
    }

    fn insert(&mut self, node: NodeId) {
        if self.contains(node) {
            return;
        }
        for i in 0..self.vnodes_per_node {
            self.vnodes.push((vnode_position(node, i as u32), node));
        }
        self.vnodes.sort();
    }

    fn remove(&mut self, node: NodeId) {
        self.vnodes.retain(|(_, n)| *n != node);
    }

    /// Distinct nodes in clockwise order starting at the first vnode at or
    /// after `hash`, wrapping around.
    pub fn walk(&self, hash: u64) -> Vec<NodeId> {
        if self.vnodes.is_empty() {
            return Vec::new();
        }
        let start = self.vnodes.partition_point(|(pos, _)| *pos < hash);
        // every node owns exactly vnodes_per_node positions
        let distinct = self.vnodes.len() / self.vnodes_per_node.max(1);
        let mut seen = BTreeSet::new();
        let mut out = Vec::with_capacity(distinct);
        for i in 0..self.vnodes.len() {
            let (_, n) = self.vnodes[(start + i) % self.vnodes.len()];
            if seen.insert(n) {
                out.push(n);
                if out.len() == distinct {
                    break;
                }
            }
        }
        out
    }

    /// Pure ring owner, ignoring liveness and load.
    pub fn primary(&self, key: &ObjectUri) -> Option<NodeId> {
        if self.vnodes.is_empty() {
            return None;
        }
        let i = self.vnodes.partition_point(|(pos, _)| *pos < key.hash64());
        Some(self.vnodes[i % self.vnodes.len()].1)
    }

    /// Choose `r` replicas for a key hash.
    ///
    /// Walks the ring clockwise over eligible nodes. While some fault domain
    /// is unrepresented only nodes from unrepresented domains qualify; once
    /// every domain is used the constraint is relaxed. Each pick takes the
    /// least loaded of the first `2r` qualifying candidates, ties by ring
    /// order.
    pub fn select<'a>(
        &self,
        hash: u64,
        r: usize,
        info: impl Fn(NodeId) -> Option<Candidate<'a>>,
    ) -> Result<Placement> {
        assert!(r >= 1, "replica count must be at least 1");
        let candidates: Vec<(NodeId, Candidate<'a>)> =
            self.walk(hash).into_iter().filter_map(|n| info(n).map(|c| (n, c))).collect();
        if candidates.len() < r {
            return Err(Error::InsufficientNodes { needed: r, available: candidates.len() });
        }
        let all_domains: BTreeSet<&str> = candidates.iter().map(|(_, c)| c.fault_domain).collect();
        let mut used_domains: BTreeSet<&str> = BTreeSet::new();
        let mut taken = vec![false; candidates.len()];
        let mut picked = Vec::with_capacity(r);
        let mut degraded = false;
        while picked.len() < r {
            let relax = used_domains.len() >= all_domains.len();
            let window: Vec<usize> = (0..candidates.len())
                .filter(|&i| !taken[i] && (relax || !used_domains.contains(candidates[i].1.fault_domain)))
                .take(2 * r)
                .collect();
            let best = window
                .iter()
                .copied()
                .min_by(|&a, &b| {
                    candidates[a].1.load.total_cmp(&candidates[b].1.load).then(a.cmp(&b))
                })
                .expect("window is non-empty while candidates remain");
            taken[best] = true;
            if !used_domains.insert(candidates[best].1.fault_domain) {
                degraded = true;
            }
            picked.push(candidates[best].0);
        }
        Ok(Placement { nodes: picked, degraded })
    }

    /// Apply a membership change and report which of `keys` changed primary.
    pub fn update(&self, change: RingChange, keys: &[ObjectUri]) -> (PlacementRing, RemapReport) {
        let mut next = self.clone();
        match change {
            RingChange::Add(n) => next.insert(n),
            RingChange::Remove(n) => next.remove(n),
        }
        let report = remap(self, &next, keys);
        (next, report)
    }
}

pub fn remap(before: &PlacementRing, after: &PlacementRing, keys: &[ObjectUri]) -> RemapReport {
    let moved = keys
        .iter()
        .filter_map(|k| {
            let (a, b) = (before.primary(k), after.primary(k));
            (a != b).then(|| (k.clone(), a, b))
        })
        .collect();
    RemapReport { moved, total: keys.len() }
}

pub fn ring_update(ring: &PlacementRing, change: RingChange, keys: &[ObjectUri]) -> (PlacementRing, RemapReport) {
    ring.update(change, keys)
}

/// Replica owners for `key` among the ACTIVE nodes of `table`.
pub fn ring_owners(ring: &PlacementRing, table: &MembershipTable, key: &ObjectUri, r: usize) -> Result<Vec<NodeId>> {
    owners_excluding(ring, table, key, r, &BTreeSet::new()).map(|p| p.nodes)
}

pub fn owners_excluding(
    ring: &PlacementRing,
    table: &MembershipTable,
    key: &ObjectUri,
    r: usize,
    exclude: &BTreeSet<NodeId>,
) -> Result<Placement> {
    let placement = ring.select(key.hash64(), r, |n| {
        if exclude.contains(&n) {
            return None;
        }
        table
            .get(n)
            .filter(|e| e.state == NodeState::Active)
            .map(|e| Candidate { fault_domain: e.fault_domain.as_str(), load: e.load })
    })?;
    if placement.degraded {
        tracing::warn!(key = %key, nodes = ?placement.nodes, "degraded placement: fault domain reused");
    }
    Ok(placement)
}

/// Count primary ownership of `keys` per node.
pub fn ownership_counts(ring: &PlacementRing, keys: &[ObjectUri]) -> BTreeMap<NodeId, usize> {
    let mut counts: BTreeMap<NodeId, usize> = ring.nodes().into_iter().map(|n| (n, 0)).collect();
    for k in keys {
        if let Some(p) = ring.primary(k) {
            *counts.entry(p).or_default() += 1;
        }
    }
    counts
}
