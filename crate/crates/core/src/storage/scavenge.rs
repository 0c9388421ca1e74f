//! Rebuilding the reference database from the sidecars on every node.

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use super::disk::Disk;
use super::engine::{sidecar_rel, Store};
use super::refdb::ReferenceDb;
use super::sidecar::{parse_sidecar, Sidecar};
use crate::cluster::NodeId;
use crate::model::{ObjectUri, VersionId};

#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub struct FileProblem {
    pub node: NodeId,
    pub path: String,
    pub reason: String,
}

#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ScavengeReport {
    pub files_scanned: usize,
    pub corrupt: Vec<FileProblem>,
    /// Blobs no valid sidecar references.
    pub orphaned: Vec<FileProblem>,
    pub skipped_nodes: Vec<NodeId>,
}

pub struct ScanTarget<'a> {
    pub id: NodeId,
    pub disk: &'a dyn Disk,
    pub up: bool,
}

/// Enumerate every sidecar on the reachable nodes and rebuild
/// `URI → versions / replicas / latest record`. Conflicting sidecars for one
/// `(URI, version)` resolve to the highest logical timestamp.
pub fn scavenge(nodes: &[ScanTarget<'_>], shards: usize) -> (ReferenceDb, ScavengeReport) {
    let mut report = ScavengeReport::default();
    // (uri, version) -> (winning sidecar, winning bytes, holders)
    let mut found: BTreeMap<(ObjectUri, VersionId), (Sidecar, Vec<u8>, BTreeSet<NodeId>)> = BTreeMap::new();
    let mut blobs: Vec<(NodeId, String)> = Vec::new();
    for t in nodes {
        if !t.up {
            report.skipped_nodes.push(t.id);
            continue;
        }
        let files = match t.disk.list("sidecars/") {
            Ok(f) => f,
            Err(e) => {
                report.corrupt.push(FileProblem { node: t.id, path: "sidecars/".into(), reason: e.to_string() });
                continue;
            }
        };
        for path in files {
            report.files_scanned += 1;
            let parsed = t.disk.read(&path).map_err(|e| e.to_string()).and_then(|b| {
                parse_sidecar(&b).map(|s| (s, b)).map_err(|e| e.to_string())
            });
            let (sc, bytes) = match parsed {
                Ok(x) => x,
                Err(reason) => {
                    report.corrupt.push(FileProblem { node: t.id, path, reason });
                    continue;
                }
            };
            if sidecar_rel(&sc.uri, sc.version) != path {
                report.corrupt.push(FileProblem { node: t.id, path, reason: "sidecar stored under the wrong path".into() });
                continue;
            }
            let key = (sc.uri.clone(), sc.version);
            match found.get_mut(&key) {
                None => {
                    found.insert(key, (sc, bytes, BTreeSet::from([t.id])));
                }
                Some((best, best_bytes, holders)) => {
                    holders.insert(t.id);
                    if (sc.logical_ts, &bytes) > (best.logical_ts, best_bytes) {
                        *best = sc;
                        *best_bytes = bytes;
                    }
                }
            }
        }
        match t.disk.list("blobs/") {
            Ok(files) => {
                report.files_scanned += files.len();
                blobs.extend(files.into_iter().map(|p| (t.id, p)));
            }
            Err(e) => report.corrupt.push(FileProblem { node: t.id, path: "blobs/".into(), reason: e.to_string() }),
        }
    }
    let mut db = ReferenceDb::new(shards);
    let mut referenced = BTreeSet::new();
    for (_, (sc, _, holders)) in found {
        if !sc.system.tombstone {
            referenced.insert(sc.system.content_digest.clone());
        }
        let lts = sc.logical_ts;
        db.record_version(sc.into_record(), holders, lts);
    }
    for (node, path) in blobs {
        let digest = path.rsplit('/').next().unwrap_or_default();
        if !referenced.contains(digest) {
            report.orphaned.push(FileProblem { node, path, reason: "no sidecar references this blob".into() });
        }
    }
    (db, report)
}

impl Store {
    /// Scan all nodes without touching the live state.
    pub fn scavenge_snapshot(&self) -> (ReferenceDb, ScavengeReport) {
        let g = self.inner.read();
        let targets: Vec<ScanTarget<'_>> =
            g.nodes.values().map(|n| ScanTarget { id: n.id, disk: n.disk.as_ref(), up: n.up }).collect();
        scavenge(&targets, g.cfg.shards)
    }

    /// Replace the reference database with a scavenged one and rebuild the
    /// index and graphs from it. The Lamport clock resumes past every
    /// timestamp seen on disk.
    pub fn rebuild(&self) -> ScavengeReport {
        let mut g = self.inner.write();
        let (db, report) = {
            let targets: Vec<ScanTarget<'_>> =
                g.nodes.values().map(|n| ScanTarget { id: n.id, disk: n.disk.as_ref(), up: n.up }).collect();
            scavenge(&targets, g.cfg.shards)
        };
        let lts = db.max_logical_ts();
        g.refdb = db;
        g.observe(lts);
        g.reindex_all();
        report
    }

    /// Delete blobs that no recorded version references. Holding the write
    /// lock keeps this from overlapping a rebuild.
    pub fn gc(&self) -> usize {
        let g = self.inner.write();
        let referenced: BTreeSet<String> = g
            .refdb
            .iter()
            .flat_map(|(_, e)| e.versions.values().filter(|v| !v.tombstone).map(|v| v.digest.clone()))
            .collect();
        let mut removed = 0;
        for n in g.nodes.values().filter(|n| n.up) {
            for path in n.disk.list("blobs/").unwrap_or_default() {
                let digest = path.rsplit('/').next().unwrap_or_default();
                if !referenced.contains(digest) && n.disk.remove(&path).is_ok() {
                    removed += 1;
                }
            }
        }
        removed
    }
}
