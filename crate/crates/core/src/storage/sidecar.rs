//! Per-version metadata document written next to every blob replica.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::canonical;
use crate::cluster::NodeId;
use crate::error::{Error, Result};
use crate::model::{
    is_digest_hex, valid_partition_name, GeoState, MetadataPartition, ObjectRecord, ObjectUri, RelationTag,
    SystemMetadata, VersionId,
};

pub const SIDECAR_FORMAT: u32 = 1;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Sidecar {
    pub format_version: u32,
    pub uri: ObjectUri,
    pub version: VersionId,
    pub system: SystemMetadata,
    pub partitions: BTreeMap<String, MetadataPartition>,
    pub relations: Vec<RelationTag>,
    pub geo: GeoState,
    /// Wall-clock milliseconds of the write.
    pub write_ts: u64,
    /// Node that coordinated the write.
    pub writer: NodeId,
    /// Cluster-local Lamport time of the mutation that produced this file.
    pub logical_ts: u64,
}

impl Sidecar {
    pub fn new(record: &ObjectRecord, write_ts: u64, writer: NodeId, logical_ts: u64) -> Self {
        Self {
            format_version: SIDECAR_FORMAT,
            uri: record.uri.clone(),
            version: record.version(),
            system: record.system.clone(),
            partitions: record.partitions.clone(),
            relations: record.relations.clone(),
            geo: record.geo.clone(),
            write_ts,
            writer,
            logical_ts,
        }
    }

    pub fn record(&self) -> ObjectRecord {
        ObjectRecord {
            uri: self.uri.clone(),
            system: self.system.clone(),
            partitions: self.partitions.clone(),
            relations: self.relations.clone(),
            geo: self.geo.clone(),
        }
    }

    pub fn into_record(self) -> ObjectRecord {
        ObjectRecord {
            uri: self.uri,
            system: self.system,
            partitions: self.partitions,
            relations: self.relations,
            geo: self.geo,
        }
    }
}

pub fn serialize_sidecar(sidecar: &Sidecar) -> Vec<u8> {
    canonical::to_vec(sidecar).expect("sidecar always serializes")
}

pub fn parse_sidecar(bytes: &[u8]) -> Result<Sidecar> {
    let s: Sidecar = canonical::from_slice(bytes).map_err(|e| Error::MalformedSidecar(e.to_string()))?;
    if s.format_version != SIDECAR_FORMAT {
        return Err(Error::MalformedSidecar(format!("unsupported format_version {}", s.format_version)));
    }
    if s.version != s.system.version {
        return Err(Error::MalformedSidecar("version disagrees with system metadata".into()));
    }
    if !is_digest_hex(&s.system.content_digest) {
        return Err(Error::MalformedSidecar("content digest is not 64 lowercase hex chars".into()));
    }
    if s.system.tombstone && s.system.size != 0 {
        return Err(Error::MalformedSidecar("tombstone with non-zero size".into()));
    }
    for (name, p) in &s.partitions {
        if name != &p.name || !valid_partition_name(name) {
            return Err(Error::MalformedSidecar(format!("bad partition entry {name:?}")));
        }
    }
    Ok(s)
}
