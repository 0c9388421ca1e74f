//! Append-only record of local mutations, shipped asynchronously to remote
//! clusters. Sequence numbers start at 1 and are gapless per cluster.

use std::fs::{File, OpenOptions};
use std::io::{self, BufReader, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::cluster::wire;
use crate::model::{MetadataPartition, ObjectUri, RelationTag, Stamp, VersionId};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum ChangeOp {
    PutObject,
    PutAnnotation,
    DeleteAnnotation,
    DeleteObject,
    PutRelation,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ChangePayload {
    Object { digest: String, size: u64, created_at: u64, partitions: Vec<MetadataPartition> },
    Partition { partition: MetadataPartition },
    PartitionName { name: String },
    Tombstone,
    Relation { tag: RelationTag },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ChangeLogEntry {
    pub seq: u64,
    pub cluster: u32,
    pub op: ChangeOp,
    pub uri: ObjectUri,
    pub version: VersionId,
    pub stamp: Stamp,
    pub timestamp: u64,
    pub payload: ChangePayload,
}

pub struct ChangeLog {
    cluster: u32,
    entries: Vec<ChangeLogEntry>,
    file: Option<File>,
}

impl ChangeLog {
    pub fn in_memory(cluster: u32) -> Self {
        Self { cluster, entries: Vec::new(), file: None }
    }

    /// Open (or create) a file-backed log, replaying existing entries.
    pub fn open(cluster: u32, path: &Path) -> io::Result<Self> {
        let mut entries = Vec::new();
        if path.exists() {
            let mut r = BufReader::new(File::open(path)?);
            while let Some(e) = wire::read_frame::<_, ChangeLogEntry>(&mut r)? {
                if e.seq != entries.len() as u64 + 1 {
                    return Err(io::Error::new(io::ErrorKind::InvalidData, format!("gap at seq {}", e.seq)));
                }
                entries.push(e);
            }
        }
        let file = OpenOptions::new().create(true).append(true).open(path)?;
        Ok(Self { cluster, entries, file: Some(file) })
    }

    pub fn cluster(&self) -> u32 {
        self.cluster
    }

    pub fn append(
        &mut self,
        op: ChangeOp,
        uri: ObjectUri,
        version: VersionId,
        stamp: Stamp,
        timestamp: u64,
        payload: ChangePayload,
    ) -> io::Result<u64> {
        let seq = self.entries.len() as u64 + 1;
        let e = ChangeLogEntry { seq, cluster: self.cluster, op, uri, version, stamp, timestamp, payload };
        if let Some(f) = self.file.as_mut() {
            f.write_all(&wire::encode(&e))?;
            f.sync_data()?;
        }
        self.entries.push(e);
        Ok(seq)
    }

    pub fn last_seq(&self) -> u64 {
        self.entries.len() as u64
    }

    pub fn entries(&self) -> &[ChangeLogEntry] {
        &self.entries
    }

    /// Entries with `seq > cursor`.
    pub fn entries_after(&self, cursor: u64) -> &[ChangeLogEntry] {
        let start = (cursor as usize).min(self.entries.len());
        &self.entries[start..]
    }
}
