//! Push-pull anti-entropy membership with heartbeat counters.
//!
//! Every node keeps a [`MembershipTable`]. On each tick the local heartbeat is
//! bumped and the table digest is pushed to `fanout` random active peers; a
//! receiver merges the digest and answers with its own (the pull half).
//! Failure detection is purely local: an entry whose heartbeat has not
//! advanced for `t_suspect` ticks is SUSPECT, for `t_fail` ticks FAILED.

use std::collections::BTreeMap;
use std::fmt;

use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct NodeId(pub u64);

impl fmt::Display for NodeId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "n{}", self.0)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum NodeState {
    Active,
    Suspect,
    Failed,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct NodeInfo {
    pub node_id: NodeId,
    pub address: String,
    pub fault_domain: String,
    pub heartbeat: u64,
    pub state: NodeState,
    pub load: f64,
}

impl NodeInfo {
    pub fn new(node_id: NodeId, address: impl Into<String>, fault_domain: impl Into<String>) -> Self {
        Self {
            node_id,
            address: address.into(),
            fault_domain: fault_domain.into(),
            heartbeat: 0,
            state: NodeState::Active,
            load: 0.0,
        }
    }
}

/// The gossiped part of a [`NodeInfo`]. State is a local judgement and is
/// never transmitted.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GossipEntry {
    pub node_id: NodeId,
    pub address: String,
    pub fault_domain: String,
    pub heartbeat: u64,
    pub load: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MembershipDigest {
    pub from: NodeId,
    pub entries: Vec<GossipEntry>,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Transition {
    pub node: NodeId,
    pub from: NodeState,
    pub to: NodeState,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct DetectorConfig {
    pub t_suspect: u64,
    pub t_fail: u64,
}

impl Default for DetectorConfig {
    fn default() -> Self {
        Self { t_suspect: 5, t_fail: 10 }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MembershipTable {
    local: NodeId,
    entries: BTreeMap<NodeId, NodeInfo>,
    local_clock: u64,
    /// Local tick at which each entry's heartbeat was last seen to advance.
    last_advance: BTreeMap<NodeId, u64>,
}

impl MembershipTable {
    pub fn new(local: NodeInfo) -> Self {
        let id = local.node_id;
        let mut entries = BTreeMap::new();
        entries.insert(id, NodeInfo { state: NodeState::Active, ..local });
        let mut last_advance = BTreeMap::new();
        last_advance.insert(id, 0);
        Self { local: id, entries, local_clock: 0, last_advance }
    }

    /// Seed the table with a peer it should start gossiping to.
    pub fn add_seed(&mut self, peer: NodeInfo) {
        if peer.node_id == self.local || self.entries.contains_key(&peer.node_id) {
            return;
        }
        self.last_advance.insert(peer.node_id, self.local_clock);
        self.entries.insert(peer.node_id, NodeInfo { state: NodeState::Active, ..peer });
    }

    pub fn local_id(&self) -> NodeId {
        self.local
    }

    pub fn local_clock(&self) -> u64 {
        self.local_clock
    }

    pub fn local(&self) -> &NodeInfo {
        &self.entries[&self.local]
    }

    pub fn get(&self, id: NodeId) -> Option<&NodeInfo> {
        self.entries.get(&id)
    }

    pub fn entries(&self) -> impl Iterator<Item = &NodeInfo> {
        self.entries.values()
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn node_ids(&self) -> Vec<NodeId> {
        self.entries.keys().copied().collect()
    }

    pub fn active_ids(&self) -> Vec<NodeId> {
        self.entries.values().filter(|n| n.state == NodeState::Active).map(|n| n.node_id).collect()
    }

    pub fn is_active(&self, id: NodeId) -> bool {
        self.entries.get(&id).is_some_and(|n| n.state == NodeState::Active)
    }

    pub fn set_local_load(&mut self, load: f64) {
        if let Some(e) = self.entries.get_mut(&self.local) {
            e.load = load;
        }
    }

    /// Administratively set a node's state (used by single-process deployments
    /// where liveness is probed directly rather than gossiped).
    pub fn force_state(&mut self, id: NodeId, state: NodeState) {
        if let Some(e) = self.entries.get_mut(&id) {
            e.state = state;
        }
    }

    pub fn digest(&self) -> MembershipDigest {
        MembershipDigest {
            from: self.local,
            entries: self
                .entries
                .values()
                .map(|n| GossipEntry {
                    node_id: n.node_id,
                    address: n.address.clone(),
                    fault_domain: n.fault_domain.clone(),
                    heartbeat: n.heartbeat,
                    load: n.load,
                })
                .collect(),
        }
    }

    /// Advance to `now`, bump the local heartbeat and choose up to `fanout`
    /// active peers to push the digest to.
    pub fn gossip_tick<R: Rng + ?Sized>(
        &mut self,
        now: u64,
        rng: &mut R,
        fanout: usize,
    ) -> Vec<(NodeId, MembershipDigest)> {
        self.local_clock = self.local_clock.max(now);
        let local = self.local;
        if let Some(e) = self.entries.get_mut(&local) {
            e.heartbeat += 1;
            e.state = NodeState::Active;
        }
        self.last_advance.insert(local, self.local_clock);
        let peers: Vec<NodeId> = self
            .entries
            .values()
            .filter(|n| n.node_id != local && n.state == NodeState::Active)
            .map(|n| n.node_id)
            .collect();
        if peers.is_empty() || fanout == 0 {
            return Vec::new();
        }
        let digest = self.digest();
        let mut chosen: Vec<NodeId> = peers.choose_multiple(rng, fanout.min(peers.len())).copied().collect();
        chosen.sort();
        chosen.into_iter().map(|p| (p, digest.clone())).collect()
    }

    /// Merge a remote digest: per node keep the higher heartbeat (ties keep
    /// local), adopt unknown nodes. Returns state transitions caused by the
    /// merge (an advancing heartbeat restores ACTIVE).
    pub fn merge_digest(&mut self, remote: &MembershipDigest) -> Vec<Transition> {
        let mut transitions = Vec::new();
        for r in &remote.entries {
            match self.entries.get_mut(&r.node_id) {
                None => {
                    self.entries.insert(
                        r.node_id,
                        NodeInfo {
                            node_id: r.node_id,
                            address: r.address.clone(),
                            fault_domain: r.fault_domain.clone(),
                            heartbeat: r.heartbeat,
                            state: NodeState::Active,
                            load: r.load,
                        },
                    );
                    self.last_advance.insert(r.node_id, self.local_clock);
                }
                Some(e) if r.heartbeat > e.heartbeat => {
                    e.heartbeat = r.heartbeat;
                    e.address = r.address.clone();
                    e.fault_domain = r.fault_domain.clone();
                    e.load = r.load;
                    if e.state != NodeState::Active && r.node_id != self.local {
                        transitions.push(Transition { node: r.node_id, from: e.state, to: NodeState::Active });
                    }
                    e.state = NodeState::Active;
                    self.last_advance.insert(r.node_id, self.local_clock);
                }
                Some(_) => {}
            }
        }
        transitions
    }

    /// Re-evaluate every remote entry against the silence thresholds.
    pub fn detect_failures(&mut self, now: u64, cfg: DetectorConfig) -> Vec<Transition> {
        assert!(cfg.t_fail > cfg.t_suspect && cfg.t_suspect > 0, "need t_fail > t_suspect > 0");
        self.local_clock = self.local_clock.max(now);
        let mut out = Vec::new();
        for (id, e) in self.entries.iter_mut() {
            if *id == self.local {
                continue;
            }
            let since = self.last_advance.get(id).copied().unwrap_or(0);
            let silent = self.local_clock.saturating_sub(since);
            let target = if silent >= cfg.t_fail {
                NodeState::Failed
            } else if silent >= cfg.t_suspect {
                NodeState::Suspect
            } else {
                continue;
            };
            // a silent node walks ACTIVE -> SUSPECT -> FAILED, never skipping
            if e.state == NodeState::Active && target != NodeState::Active {
                out.push(Transition { node: *id, from: NodeState::Active, to: NodeState::Suspect });
                e.state = NodeState::Suspect;
            }
            if e.state == NodeState::Suspect && target == NodeState::Failed {
                out.push(Transition { node: *id, from: NodeState::Suspect, to: NodeState::Failed });
                e.state = NodeState::Failed;
            }
        }
        out
    }
}

/// Pure two-table merge: the result keeps `local`'s identity and clock.
pub fn merge_membership(local: &MembershipTable, remote: &MembershipTable) -> MembershipTable {
    let mut out = local.clone();
    out.merge_digest(&remote.digest());
    out
}
