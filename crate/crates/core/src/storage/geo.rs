//! Asynchronous change-log shipping between clusters with last-writer-wins
//! conflict resolution.

use std::sync::atomic::{AtomicBool, Ordering};

use super::changelog::{ChangeLogEntry, ChangePayload};
use super::disk::blob_path;
use super::engine::{tombstone_record, BlobSource, Inner, Store};
use super::lww::{apply_register, supersede, Register};
use crate::error::{Error, Result};
use crate::model::{content_digest, GeoState, ObjectRecord, SystemMetadata, VersionId};

pub trait BlobFetch {
    fn fetch_blob(&self, digest: &str) -> Option<Vec<u8>>;
}

pub trait GeoPeer {
    fn cluster_id(&self) -> u32;
    /// Apply entries in order. Must be idempotent.
    fn apply_entries(&self, entries: &[ChangeLogEntry], source: &dyn BlobFetch) -> Result<()>;
}

impl BlobFetch for Store {
    fn fetch_blob(&self, digest: &str) -> Option<Vec<u8>> {
        let g = self.inner.read();
        let rel = blob_path(digest);
        g.nodes.values().filter(|n| n.up).find_map(|n| {
            n.disk.read(&rel).ok().filter(|b| content_digest(b) == digest)
        })
    }
}

impl GeoPeer for Store {
    fn cluster_id(&self) -> u32 {
        self.cluster_id()
    }

    fn apply_entries(&self, entries: &[ChangeLogEntry], source: &dyn BlobFetch) -> Result<()> {
        let mut g = self.inner.write();
        for e in entries {
            g.apply_remote(e, source)?;
        }
        Ok(())
    }
}

/// A peer behind a link that can be cut.
pub struct Link<'a, P: GeoPeer + ?Sized> {
    pub peer: &'a P,
    pub up: &'a AtomicBool,
}

impl<P: GeoPeer + ?Sized> GeoPeer for Link<'_, P> {
    fn cluster_id(&self) -> u32 {
        self.peer.cluster_id()
    }

    fn apply_entries(&self, entries: &[ChangeLogEntry], source: &dyn BlobFetch) -> Result<()> {
        if !self.up.load(Ordering::SeqCst) {
            return Err(Error::RemoteUnavailable(format!("cluster {}", self.peer.cluster_id())));
        }
        self.peer.apply_entries(entries, source)
    }
}

/// Ship entries after `cursor` to `remote`. Returns the new cursor; on error
/// the cursor is unchanged and the batch can be retried.
pub fn geo_ship(local: &Store, cursor: u64, remote: &dyn GeoPeer) -> Result<u64> {
    let entries = local.changelog_after(cursor);
    let Some(last) = entries.last().map(|e| e.seq) else {
        return Ok(cursor);
    };
    remote.apply_entries(&entries, local)?;
    Ok(last)
}

impl Inner {
    fn apply_candidate(&mut self, candidate: ObjectRecord, source: &dyn BlobFetch) -> Result<()> {
        let current = self.refdb.get(&candidate.uri).map(|e| &e.record);
        let Some(record) = supersede(current, candidate) else {
            return Ok(());
        };
        let fetched;
        let blob = if record.is_tombstone() {
            None
        } else {
            let d = record.system.content_digest.clone();
            match self.blob_source(&Default::default(), &d, record.system.size, false) {
                Some(s) => Some(s),
                None => {
                    fetched = source
                        .fetch_blob(&d)
                        .ok_or_else(|| Error::RemoteUnavailable(format!("blob {d} not retrievable")))?;
                    Some(BlobSource::bytes(&fetched))
                }
            }
        };
        let lts = self.tick();
        self.write_version(record, blob.as_ref(), lts)
    }

    pub(crate) fn apply_remote(&mut self, e: &ChangeLogEntry, source: &dyn BlobFetch) -> Result<()> {
        if e.cluster == self.cfg.cluster {
            return Ok(());
        }
        self.observe(e.stamp.lts);
        let next_version = self.refdb.get(&e.uri).map(|x| x.latest.next()).unwrap_or(VersionId::FIRST);
        match &e.payload {
            ChangePayload::Object { digest, size, created_at, partitions } => {
                let candidate = ObjectRecord {
                    uri: e.uri.clone(),
                    system: SystemMetadata {
                        size: *size,
                        created_at: *created_at,
                        updated_at: e.timestamp,
                        content_digest: digest.clone(),
                        version: next_version,
                        tombstone: false,
                    },
                    partitions: partitions.iter().map(|p| (p.name.clone(), p.clone())).collect(),
                    relations: vec![],
                    geo: GeoState { version: e.stamp, ..Default::default() },
                };
                self.apply_candidate(candidate, source)
            }
            ChangePayload::Tombstone => {
                let candidate = tombstone_record(&e.uri, next_version, e.timestamp, e.stamp);
                self.apply_candidate(candidate, source)
            }
            ChangePayload::Partition { .. } | ChangePayload::PartitionName { .. } | ChangePayload::Relation { .. } => {
                let Some(current) = self.refdb.get(&e.uri).map(|x| x.record.clone()) else {
                    tracing::debug!(uri = %e.uri, seq = e.seq, "register write for unknown object skipped");
                    return Ok(());
                };
                let reg = match &e.payload {
                    ChangePayload::Partition { partition } => {
                        Register::Partition { name: partition.name.clone(), value: Some(partition.clone()) }
                    }
                    ChangePayload::PartitionName { name } => Register::Partition { name: name.clone(), value: None },
                    ChangePayload::Relation { tag } => Register::Relation(tag.clone()),
                    _ => unreachable!("matched above"),
                };
                let mut record = current;
                if apply_register(&mut record, e.stamp, reg) {
                    if !record.is_tombstone() {
                        record.system.updated_at = e.timestamp;
                    }
                    let lts = self.tick();
                    self.rewrite_latest(record, lts)?;
                }
                Ok(())
            }
        }
    }
}
