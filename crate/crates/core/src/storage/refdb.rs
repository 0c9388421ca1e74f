//! The object reference database: URI → versions, replica locations and the
//! latest record (whose partitions feed the metadata index).

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use crate::cluster::ring::Candidate;
use crate::cluster::{MembershipTable, NodeId, NodeState, PlacementRing};
use crate::model::{hash64, NamespaceId, ObjectRecord, ObjectUri, VersionId};

pub const DEFAULT_SHARDS: usize = 16;

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct VersionRef {
    pub tombstone: bool,
    pub digest: String,
    pub size: u64,
    pub created_at: u64,
    pub replicas: BTreeSet<NodeId>,
    /// Highest sidecar logical timestamp written for this version.
    pub logical_ts: u64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RefEntry {
    pub latest: VersionId,
    pub versions: BTreeMap<VersionId, VersionRef>,
    /// Full record of the latest version.
    pub record: ObjectRecord,
}

impl RefEntry {
    pub fn is_live(&self) -> bool {
        !self.record.is_tombstone()
    }

    pub fn latest_ref(&self) -> &VersionRef {
        &self.versions[&self.latest]
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct ReferenceDb {
    shards: Vec<BTreeMap<ObjectUri, RefEntry>>,
}

impl Default for ReferenceDb {
    fn default() -> Self {
        Self::new(DEFAULT_SHARDS)
    }
}

impl ReferenceDb {
    pub fn new(shards: usize) -> Self {
        assert!(shards > 0, "at least one shard");
        Self { shards: vec![BTreeMap::new(); shards] }
    }

    pub fn shard_count(&self) -> usize {
        self.shards.len()
    }

    pub fn shard_of(&self, uri: &ObjectUri) -> usize {
        (uri.hash64() % self.shards.len() as u64) as usize
    }

    pub fn get(&self, uri: &ObjectUri) -> Option<&RefEntry> {
        self.shards[self.shard_of(uri)].get(uri)
    }

    pub fn get_mut(&mut self, uri: &ObjectUri) -> Option<&mut RefEntry> {
        let s = self.shard_of(uri);
        self.shards[s].get_mut(uri)
    }

    pub fn insert(&mut self, entry: RefEntry) {
        let s = self.shard_of(&entry.record.uri);
        self.shards[s].insert(entry.record.uri.clone(), entry);
    }

    /// Record a newly written version (which becomes latest if it is newer).
    pub fn record_version(&mut self, record: ObjectRecord, replicas: BTreeSet<NodeId>, logical_ts: u64) {
        let v = record.version();
        let vref = VersionRef {
            tombstone: record.is_tombstone(),
            digest: record.system.content_digest.clone(),
            size: record.system.size,
            created_at: record.system.created_at,
            replicas,
            logical_ts,
        };
        let s = self.shard_of(&record.uri);
        match self.shards[s].get_mut(&record.uri) {
            Some(e) => {
                e.versions.insert(v, vref);
                if v >= e.latest {
                    e.latest = v;
                    e.record = record;
                }
            }
            None => {
                let mut versions = BTreeMap::new();
                versions.insert(v, vref);
                self.shards[s].insert(record.uri.clone(), RefEntry { latest: v, versions, record });
            }
        }
    }

    pub fn remove(&mut self, uri: &ObjectUri) -> Option<RefEntry> {
        let s = self.shard_of(uri);
        self.shards[s].remove(uri)
    }

    pub fn len(&self) -> usize {
        self.shards.iter().map(|s| s.len()).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// All entries in URI order.
    pub fn iter(&self) -> impl Iterator<Item = (&ObjectUri, &RefEntry)> {
        let mut all: Vec<(&ObjectUri, &RefEntry)> = self.shards.iter().flat_map(|s| s.iter()).collect();
        all.sort_by(|a, b| a.0.cmp(b.0));
        all.into_iter()
    }

    pub fn uris(&self) -> Vec<ObjectUri> {
        self.iter().map(|(u, _)| u.clone()).collect()
    }

    /// Entries of one namespace in URI order.
    pub fn namespace_entries<'a>(&'a self, ns: &'a NamespaceId) -> impl Iterator<Item = (&'a ObjectUri, &'a RefEntry)> + 'a {
        self.iter().filter(move |(u, _)| u.tenant() == ns.tenant && u.namespace() == ns.namespace)
    }

    pub fn live_count(&self, ns: &NamespaceId) -> usize {
        self.namespace_entries(ns).filter(|(_, e)| e.is_live()).count()
    }

    /// Largest logical timestamp recorded anywhere; used to resume the
    /// Lamport clock after a rebuild.
    pub fn max_logical_ts(&self) -> u64 {
        let mut m = 0;
        for (_, e) in self.iter() {
            for v in e.versions.values() {
                m = m.max(v.logical_ts);
            }
            m = m.max(e.record.geo.version.lts);
            m = m.max(e.record.geo.partitions.values().map(|s| s.lts).max().unwrap_or(0));
            m = m.max(e.record.geo.removed.values().map(|s| s.lts).max().unwrap_or(0));
            m = m.max(e.record.geo.relations.iter().map(|r| r.stamp.lts).max().unwrap_or(0));
        }
        m
    }

    /// Nodes that host each shard, chosen on the placement ring so that the
    /// copies of one shard land in distinct fault domains when possible.
    pub fn shard_placement(
        &self,
        ring: &PlacementRing,
        table: &MembershipTable,
        copies: usize,
    ) -> Vec<Vec<NodeId>> {
        (0..self.shards.len())
            .map(|i| {
                let h = hash64(format!("refdb-shard-{i}").as_bytes());
                let active = table.active_ids().len();
                if active == 0 {
                    return Vec::new();
                }
                ring.select(h, copies.min(active), |n| {
                    table
                        .get(n)
                        .filter(|e| e.state == NodeState::Active)
                        .map(|e| Candidate { fault_domain: e.fault_domain.as_str(), load: 0.0 })
                })
                .map(|p| p.nodes)
                .unwrap_or_default()
            })
            .collect()
    }
}
