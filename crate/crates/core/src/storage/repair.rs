//! Restoring replica health: re-copy missing or corrupt files and top up
//! versions that have fewer than r healthy replicas.

use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};

use super::disk::blob_path;
use super::engine::{sidecar_rel, Inner, RepairItem, Store};
use super::sidecar::parse_sidecar;
use crate::cluster::NodeId;
use crate::model::{content_digest, ObjectUri, VersionId};

#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct RepairReport {
    pub versions_checked: usize,
    pub files_restored: usize,
    pub replicas_added: usize,
    /// Versions with no intact copy left anywhere.
    pub lost: Vec<(ObjectUri, VersionId)>,
}

impl Inner {
    fn repair_version(&mut self, uri: &ObjectUri, version: VersionId, report: &mut RepairReport) {
        let Some(vref) = self.refdb.get(uri).and_then(|e| e.versions.get(&version)).cloned() else {
            return;
        };
        report.versions_checked += 1;
        let rel = sidecar_rel(uri, version);
        // freshest intact sidecar among reachable replicas
        let mut best: Option<(u64, Vec<u8>)> = None;
        for n in &vref.replicas {
            let Some(node) = self.nodes.get(n).filter(|x| x.up) else { continue };
            if let Ok(bytes) = node.disk.read(&rel) {
                if let Ok(sc) = parse_sidecar(&bytes) {
                    if sc.uri == *uri && best.as_ref().is_none_or(|(ts, _)| sc.logical_ts > *ts) {
                        best = Some((sc.logical_ts, bytes));
                    }
                }
            }
        }
        let source = self.blob_source(&vref.replicas, &vref.digest, vref.size, vref.tombstone);
        let (Some((_, sidecar)), true) = (best, vref.tombstone || source.is_some()) else {
            if vref.replicas.iter().all(|n| self.is_up(*n)) {
                report.lost.push((uri.clone(), version));
            }
            return;
        };
        let mut healthy = BTreeSet::new();
        for n in &vref.replicas {
            let Some(node) = self.nodes.get(n).filter(|x| x.up) else { continue };
            let sidecar_ok = node.disk.read(&rel).is_ok_and(|b| b == sidecar);
            let blob_ok = vref.tombstone
                || node.disk.read(&blob_path(&vref.digest)).is_ok_and(|b| content_digest(&b) == vref.digest);
            if sidecar_ok && blob_ok {
                healthy.insert(*n);
                continue;
            }
            if !blob_ok {
                let _ = node.disk.remove(&blob_path(&vref.digest));
            }
            if self.node_write(*n, source.as_ref(), &rel, &sidecar).is_ok() {
                report.files_restored += 1;
                healthy.insert(*n);
            }
        }
        if healthy.len() < self.cfg.replicas {
            let need = self.cfg.replicas - healthy.len();
            let (added, _) = self.fan_out(uri, source.as_ref(), &rel, &sidecar, &vref.replicas, need);
            report.replicas_added += added.len();
            if let Some(r) = self.refdb.get_mut(uri).and_then(|e| e.versions.get_mut(&version)) {
                r.replicas.extend(added);
            }
        }
    }
}

impl Store {
    /// Check every version of every object and restore replica health.
    pub fn repair(&self) -> RepairReport {
        let mut g = self.inner.write();
        let mut report = RepairReport::default();
        let work: Vec<(ObjectUri, VersionId)> = g
            .refdb
            .iter()
            .flat_map(|(u, e)| e.versions.keys().map(move |v| (u.clone(), *v)))
            .collect();
        for (uri, v) in work {
            g.repair_version(&uri, v, &mut report);
        }
        g.repairs.lock().clear();
        report
    }

    /// Repair only the items flagged by reads.
    pub fn repair_flagged(&self) -> RepairReport {
        let mut g = self.inner.write();
        let items: Vec<RepairItem> = std::mem::take(&mut *g.repairs.lock()).into_iter().collect();
        let mut report = RepairReport::default();
        let mut done: BTreeSet<(ObjectUri, VersionId)> = BTreeSet::new();
        for it in items {
            if done.insert((it.uri.clone(), it.version)) {
                g.repair_version(&it.uri, it.version, &mut report);
            }
        }
        report
    }

    /// Nodes that should hold `uri@version` according to the reference database.
    pub fn replicas_of(&self, uri: &ObjectUri, version: VersionId) -> BTreeSet<NodeId> {
        let g = self.inner.read();
        g.refdb.get(uri).and_then(|e| e.versions.get(&version)).map(|v| v.replicas.clone()).unwrap_or_default()
    }
}
