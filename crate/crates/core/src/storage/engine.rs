//! The store: synchronous replica fan-out, versioning, annotations and the
//! derived index and graph views.

use std::collections::{BTreeMap, BTreeSet};
use std::io::{self, Read};
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::Arc;

use parking_lot::{Mutex, RwLock};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::changelog::{ChangeLog, ChangeLogEntry, ChangeOp, ChangePayload};
use super::disk::{blob_path, sidecar_path, Disk};
use super::lww::{apply_register, Register};
use super::refdb::{ReferenceDb, DEFAULT_SHARDS};
use super::sidecar::{parse_sidecar, serialize_sidecar, Sidecar};
use crate::cluster::ring::{Candidate, RingChange, DEFAULT_VNODES};
use crate::cluster::{wire, MembershipTable, NodeId, NodeState, PlacementRing};
use crate::error::{Error, Result};
use crate::graph::{validate_edge, RelationGraph};
use crate::index::{IndexEvent, IndexShard};
use crate::model::{
    content_digest, empty_digest, validate_partition, GeoState, MetadataPartition, NamespaceId, ObjectRecord,
    ObjectUri, PartitionLimits, RelationTag, Stamp, SystemMetadata, VersionId,
};
use crate::pipeline::{DictionaryDoc, PipelineDoc, PipelineRegistry, PipelineRun};
use crate::tenancy::{require, Action, AdminOp, NamespaceConfig, Principal, Registry, Resource};

pub trait Clock: Send + Sync {
    /// Milliseconds since an arbitrary epoch.
    fn now_ms(&self) -> u64;
}

pub struct SystemClock;

impl Clock for SystemClock {
    fn now_ms(&self) -> u64 {
        std::time::SystemTime::now()
            .duration_since(std::time::UNIX_EPOCH)
            .map(|d| d.as_millis() as u64)
            .unwrap_or(0)
    }
}

/// A clock that only moves when told to.
#[derive(Default)]
pub struct ManualClock(AtomicU64);

impl ManualClock {
    pub fn new(start: u64) -> Self {
        Self(AtomicU64::new(start))
    }

    pub fn set(&self, t: u64) {
        self.0.store(t, Ordering::SeqCst);
    }

    pub fn advance(&self, dt: u64) {
        self.0.fetch_add(dt, Ordering::SeqCst);
    }
}

impl Clock for ManualClock {
    fn now_ms(&self) -> u64 {
        self.0.load(Ordering::SeqCst)
    }
}

pub const DEFAULT_MAX_BLOB: u64 = 1 << 30;
/// Only this much of a blob is tokenized for extraction.
pub const MAX_EXTRACT_BYTES: usize = 16 << 20;

#[derive(Clone, Debug)]
pub struct StoreConfig {
    pub cluster: u32,
    /// Node id written into sidecars as the coordinating writer.
    pub coordinator: NodeId,
    pub replicas: usize,
    pub shards: usize,
    pub vnodes: usize,
    pub max_blob: u64,
}

impl Default for StoreConfig {
    fn default() -> Self {
        Self {
            cluster: 1,
            coordinator: NodeId(1),
            replicas: 3,
            shards: DEFAULT_SHARDS,
            vnodes: DEFAULT_VNODES,
            max_blob: DEFAULT_MAX_BLOB,
        }
    }
}

pub struct StorageNode {
    pub id: NodeId,
    pub fault_domain: String,
    pub disk: Arc<dyn Disk>,
    /// Whether the node process is running. A down node fails every I/O.
    pub up: bool,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct NodeStatus {
    pub id: NodeId,
    pub fault_domain: String,
    pub up: bool,
    pub bytes_used: u64,
}

enum Src<'a> {
    Bytes(&'a [u8]),
    File(PathBuf),
    Disk(Arc<dyn Disk>, String),
}

/// Blob content for a write, with its digest and size precomputed.
pub struct BlobSource<'a> {
    digest: String,
    size: u64,
    src: Src<'a>,
}

impl<'a> BlobSource<'a> {
    pub fn bytes(b: &'a [u8]) -> Self {
        Self { digest: content_digest(b), size: b.len() as u64, src: Src::Bytes(b) }
    }

    /// A spooled file whose digest and size the caller already computed.
    pub fn file(path: impl Into<PathBuf>, digest: String, size: u64) -> BlobSource<'static> {
        BlobSource { digest, size, src: Src::File(path.into()) }
    }

    fn on_disk(disk: Arc<dyn Disk>, digest: &str, size: u64) -> BlobSource<'static> {
        BlobSource { digest: digest.to_string(), size, src: Src::Disk(disk, blob_path(digest)) }
    }

    pub fn digest(&self) -> &str {
        &self.digest
    }

    pub fn size(&self) -> u64 {
        self.size
    }

    fn open(&self) -> io::Result<Box<dyn Read + '_>> {
        Ok(match &self.src {
            Src::Bytes(b) => Box::new(*b),
            Src::File(p) => Box::new(std::fs::File::open(p)?),
            Src::Disk(d, rel) => d.open(rel)?,
        })
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct VersionInfo {
    pub version: VersionId,
    pub tombstone: bool,
    pub size: u64,
    pub content_digest: String,
    pub created_at: u64,
}

/// Administrative mutations, persisted in order to the admin log.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "record", rename_all = "snake_case")]
pub enum AdminRecord {
    Tenancy { op: AdminOp },
    PublishDictionary { doc: DictionaryDoc },
    PublishPipeline { doc: PipelineDoc },
}

#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub struct RepairItem {
    pub uri: ObjectUri,
    pub version: VersionId,
    pub node: NodeId,
}

fn node_down(id: NodeId) -> io::Error {
    io::Error::new(io::ErrorKind::NotConnected, format!("node {id} is down"))
}

fn sha_hex(r: &mut dyn Read) -> io::Result<(String, u64)> {
    let mut h = Sha256::new();
    let mut buf = vec![0u8; 64 * 1024];
    let mut n = 0u64;
    loop {
        let k = r.read(&mut buf)?;
        if k == 0 {
            break;
        }
        h.update(&buf[..k]);
        n += k as u64;
    }
    Ok((hex::encode(h.finalize()), n))
}

pub(crate) fn sidecar_rel(uri: &ObjectUri, version: VersionId) -> String {
    sidecar_path(uri.tenant(), uri.namespace(), uri.hash64(), version.0)
}

pub(crate) struct Inner {
    pub(crate) cfg: StoreConfig,
    pub(crate) clock: Arc<dyn Clock>,
    pub(crate) nodes: BTreeMap<NodeId, StorageNode>,
    pub(crate) ring: PlacementRing,
    pub(crate) view: Option<BTreeMap<NodeId, NodeState>>,
    pub(crate) refdb: ReferenceDb,
    pub(crate) index: BTreeMap<NamespaceId, IndexShard>,
    pub(crate) graphs: BTreeMap<NamespaceId, RelationGraph>,
    pub(crate) changelog: ChangeLog,
    pub(crate) lts: u64,
    pub(crate) registry: Registry,
    pub(crate) pipelines: PipelineRegistry,
    pub(crate) admin_log: Vec<AdminRecord>,
    pub(crate) admin_file: Option<std::fs::File>,
    pub(crate) repairs: Mutex<BTreeSet<RepairItem>>,
}

pub struct Store {
    pub(crate) inner: RwLock<Inner>,
}

impl Inner {
    pub(crate) fn now(&self) -> u64 {
        self.clock.now_ms()
    }

    pub(crate) fn tick(&mut self) -> u64 {
        self.lts += 1;
        self.lts
    }

    pub(crate) fn observe(&mut self, lts: u64) {
        self.lts = self.lts.max(lts);
    }

    pub(crate) fn stamp(&mut self) -> Stamp {
        let lts = self.tick();
        Stamp::new(lts, self.cfg.cluster)
    }

    pub(crate) fn available(&self, id: NodeId) -> bool {
        match &self.view {
            Some(v) => self.nodes.contains_key(&id) && v.get(&id) == Some(&NodeState::Active),
            None => self.nodes.get(&id).is_some_and(|n| n.up),
        }
    }

    pub(crate) fn is_up(&self, id: NodeId) -> bool {
        self.nodes.get(&id).is_some_and(|n| n.up)
    }

    /// Pick `count` nodes for `uri`, skipping `exclude`. Load is disk usage
    /// taken from `loads`.
    pub(crate) fn place(
        &self,
        uri: &ObjectUri,
        count: usize,
        exclude: &BTreeSet<NodeId>,
        loads: &BTreeMap<NodeId, f64>,
    ) -> Result<Vec<NodeId>> {
        let sel = self.ring.select(uri.hash64(), count, |n| {
            if exclude.contains(&n) || !self.available(n) {
                return None;
            }
            let node = self.nodes.get(&n)?;
            Some(Candidate { fault_domain: node.fault_domain.as_str(), load: loads.get(&n).copied().unwrap_or(0.0) })
        });
        match sel {
            Ok(p) => Ok(p.nodes),
            Err(Error::InsufficientNodes { needed, available }) => {
                Err(Error::InsufficientReplicas { needed, available })
            }
            Err(e) => Err(e),
        }
    }

    pub(crate) fn loads(&self) -> BTreeMap<NodeId, f64> {
        self.nodes.iter().map(|(id, n)| (*id, n.disk.bytes_used() as f64)).collect()
    }

    pub(crate) fn node_write(&self, id: NodeId, blob: Option<&BlobSource>, rel: &str, sidecar: &[u8]) -> io::Result<()> {
        let node = self.nodes.get(&id).ok_or_else(|| node_down(id))?;
        if !node.up {
            return Err(node_down(id));
        }
        if let Some(b) = blob {
            let path = blob_path(b.digest());
            if !node.disk.exists(&path) {
                let mut r = b.open()?;
                let n = node.disk.write_from(&path, &mut r)?;
                if n != b.size() {
                    let _ = node.disk.remove(&path);
                    return Err(io::Error::new(io::ErrorKind::UnexpectedEof, "short blob copy"));
                }
            }
        }
        node.disk.write(rel, sidecar)
    }

    /// Write blob + sidecar until `target` nodes beyond `have` hold them.
    /// Returns the nodes written; on failure returns them inside the error
    /// path so the caller can roll back.
    pub(crate) fn fan_out(
        &self,
        uri: &ObjectUri,
        blob: Option<&BlobSource>,
        rel: &str,
        sidecar: &[u8],
        have: &BTreeSet<NodeId>,
        target: usize,
    ) -> (BTreeSet<NodeId>, Option<Error>) {
        let loads = self.loads();
        let mut written = BTreeSet::new();
        let mut failed: BTreeSet<NodeId> = BTreeSet::new();
        loop {
            let missing = target.saturating_sub(written.len());
            if missing == 0 {
                return (written, None);
            }
            let exclude: BTreeSet<NodeId> = have.iter().chain(&failed).chain(&written).copied().collect();
            let picks = match self.place(uri, missing, &exclude, &loads) {
                Ok(p) => p,
                Err(Error::InsufficientReplicas { .. }) => {
                    let e = Error::InsufficientReplicas { needed: target + have.len(), available: written.len() + have.len() };
                    return (written, Some(e));
                }
                Err(e) => return (written, Some(e)),
            };
            for n in picks {
                match self.node_write(n, blob, rel, sidecar) {
                    Ok(()) => {
                        written.insert(n);
                    }
                    Err(e) => {
                        tracing::debug!(node = %n, uri = %uri, error = %e, "replica write failed; vectoring");
                        failed.insert(n);
                    }
                }
            }
        }
    }

    pub(crate) fn sidecar_bytes(&self, record: &ObjectRecord, lts: u64) -> Vec<u8> {
        serialize_sidecar(&Sidecar::new(record, self.now(), self.cfg.coordinator, lts))
    }

    /// Persist a brand-new version on r replicas, then record it.
    pub(crate) fn write_version(&mut self, record: ObjectRecord, blob: Option<&BlobSource>, lts: u64) -> Result<()> {
        let rel = sidecar_rel(&record.uri, record.version());
        let bytes = self.sidecar_bytes(&record, lts);
        let (written, err) = self.fan_out(&record.uri, blob, &rel, &bytes, &BTreeSet::new(), self.cfg.replicas);
        if let Some(e) = err {
            for n in &written {
                if let Some(node) = self.nodes.get(n).filter(|n| n.up) {
                    let _ = node.disk.remove(&rel);
                }
            }
            return Err(e);
        }
        let uri = record.uri.clone();
        self.refdb.record_version(record, written, lts);
        self.refresh(&uri);
        Ok(())
    }

    /// Rewrite the latest version's sidecar with `record` on every reachable
    /// replica, topping up to r when some are unreachable.
    pub(crate) fn rewrite_latest(&mut self, record: ObjectRecord, lts: u64) -> Result<()> {
        let uri = record.uri.clone();
        let entry = self.refdb.get(&uri).ok_or_else(|| Error::NotFound(uri.to_string()))?;
        let v = entry.latest;
        let vref = entry.latest_ref().clone();
        let rel = sidecar_rel(&uri, v);
        let bytes = self.sidecar_bytes(&record, lts);
        let mut ok = BTreeSet::new();
        for n in &vref.replicas {
            if self.available(*n) && self.node_write(*n, None, &rel, &bytes).is_ok() {
                ok.insert(*n);
            }
        }
        let mut err = None;
        if ok.len() < self.cfg.replicas {
            let source = self.blob_source(&vref.replicas, &vref.digest, vref.size, vref.tombstone);
            let need = self.cfg.replicas - ok.len();
            match (vref.tombstone, source) {
                (false, None) => err = Some(Error::InsufficientReplicas { needed: self.cfg.replicas, available: ok.len() }),
                (tomb, src) => {
                    let have: BTreeSet<NodeId> = vref.replicas.union(&ok).copied().collect();
                    let (more, e) = self.fan_out(&uri, if tomb { None } else { src.as_ref() }, &rel, &bytes, &have, need);
                    ok.extend(more);
                    err = e;
                }
            }
        }
        let e = self.refdb.get_mut(&uri).expect("checked above");
        let r = e.versions.get_mut(&v).expect("latest exists");
        r.replicas.extend(ok);
        r.logical_ts = lts;
        e.record = record;
        self.refresh(&uri);
        match err {
            Some(e) => Err(e),
            None => Ok(()),
        }
    }

    /// A verified copy of a blob from any up node among `prefer` (then any node).
    pub(crate) fn blob_source(
        &self,
        prefer: &BTreeSet<NodeId>,
        digest: &str,
        size: u64,
        tombstone: bool,
    ) -> Option<BlobSource<'static>> {
        if tombstone {
            return None;
        }
        let rel = blob_path(digest);
        let order = prefer.iter().copied().chain(self.nodes.keys().copied().filter(|n| !prefer.contains(n)));
        for n in order {
            let Some(node) = self.nodes.get(&n).filter(|n| n.up) else { continue };
            if !node.disk.exists(&rel) {
                continue;
            }
            let ok = node.disk.open(&rel).and_then(|mut r| sha_hex(&mut r)).map(|(d, _)| d == digest).unwrap_or(false);
            if ok {
                return Some(BlobSource::on_disk(node.disk.clone(), digest, size));
            }
        }
        None
    }

    /// Bring the index and graph of `uri`'s namespace in line with the
    /// reference database.
    pub(crate) fn refresh(&mut self, uri: &ObjectUri) {
        let ns = uri.scope();
        let entry = self.refdb.get(uri);
        let shard = self.index.entry(ns.clone()).or_default();
        let graph = self.graphs.entry(ns.clone()).or_insert_with(|| RelationGraph::new(ns));
        match entry.filter(|e| e.is_live()) {
            Some(e) => {
                shard.apply(&IndexEvent::PutObject {
                    uri: uri.clone(),
                    partitions: e.record.partitions.values().cloned().collect(),
                });
                graph.register_node(uri.clone());
                graph.set_out_edges(uri, &e.record.relations);
            }
            None => {
                shard.apply(&IndexEvent::DeleteObject { uri: uri.clone() });
                graph.remove_out_edges(uri);
                graph.unregister_node(uri);
            }
        }
    }

    pub(crate) fn reindex_all(&mut self) {
        self.index.clear();
        self.graphs.clear();
        for ns in self.registry.namespaces().map(|c| c.id()).collect::<Vec<_>>() {
            self.index.insert(ns.clone(), IndexShard::new());
            self.graphs.insert(ns.clone(), RelationGraph::new(ns));
        }
        for uri in self.refdb.uris() {
            self.refresh(&uri);
        }
    }

    pub(crate) fn log(&mut self, op: ChangeOp, uri: &ObjectUri, version: VersionId, stamp: Stamp, payload: ChangePayload) -> Result<()> {
        let now = self.now();
        self.changelog.append(op, uri.clone(), version, stamp, now, payload)?;
        Ok(())
    }

    pub(crate) fn ns_config(&self, ns: &NamespaceId) -> Result<&NamespaceConfig> {
        self.registry.namespace_or_err(ns)
    }

    pub(crate) fn limits(&self, ns: &NamespaceId) -> PartitionLimits {
        let mut l = PartitionLimits::default();
        if let Some(c) = self.registry.namespace(ns) {
            l.max_partitions = c.max_partitions;
        }
        l
    }

    pub(crate) fn live_record(&self, uri: &ObjectUri) -> Result<&ObjectRecord> {
        let e = self.refdb.get(uri).ok_or_else(|| Error::NotFound(uri.to_string()))?;
        if !e.is_live() {
            return Err(Error::Gone(uri.to_string()));
        }
        Ok(&e.record)
    }

    // ---- object operations (authorization already checked) ----

    pub(crate) fn put_object(
        &mut self,
        uri: &ObjectUri,
        blob: &BlobSource,
        partitions: Vec<MetadataPartition>,
    ) -> Result<VersionId> {
        let ns = uri.scope();
        let cfg = self.ns_config(&ns)?.clone();
        if blob.size() > self.cfg.max_blob {
            return Err(Error::PayloadTooLarge(blob.size()));
        }
        let limits = self.limits(&ns);
        let mut parts = BTreeMap::new();
        let mut violations = Vec::new();
        for p in partitions {
            if let Err(v) = validate_partition(&p, &limits) {
                violations.extend(v);
            }
            if parts.contains_key(&p.name) {
                violations.push(crate::model::Violation::DuplicateKey { key: p.name.clone() });
            }
            parts.insert(p.name.clone(), p);
        }
        if !violations.is_empty() {
            return Err(Error::InvalidPartition(violations));
        }
        if parts.len() > limits.max_partitions {
            return Err(Error::TooManyPartitions(limits.max_partitions));
        }
        let existing = self.refdb.get(uri);
        let live = existing.is_some_and(|e| e.is_live());
        if !cfg.versioning && live {
            return Err(Error::VersioningDisabled(uri.to_string()));
        }
        if let Some(q) = cfg.quota {
            if !live && self.refdb.live_count(&ns) as u64 >= q {
                return Err(Error::QuotaExceeded(ns.to_string()));
            }
        }
        let version = existing.map(|e| e.latest.next()).unwrap_or(VersionId::FIRST);
        let active = self.nodes.keys().filter(|n| self.available(**n)).count();
        if active < self.cfg.replicas {
            return Err(Error::InsufficientReplicas { needed: self.cfg.replicas, available: active });
        }
        let stamp = self.stamp();
        let now = self.now();
        let record = ObjectRecord {
            uri: uri.clone(),
            system: SystemMetadata {
                size: blob.size(),
                created_at: now,
                updated_at: now,
                content_digest: blob.digest().to_string(),
                version,
                tombstone: false,
            },
            partitions: parts,
            relations: vec![],
            geo: GeoState { version: stamp, ..Default::default() },
        };
        let payload = ChangePayload::Object {
            digest: blob.digest().to_string(),
            size: blob.size(),
            created_at: now,
            partitions: record.partitions.values().cloned().collect(),
        };
        self.write_version(record, Some(blob), stamp.lts)?;
        self.log(ChangeOp::PutObject, uri, version, stamp, payload)?;
        Ok(version)
    }

    pub(crate) fn delete_object(&mut self, uri: &ObjectUri) -> Result<VersionId> {
        self.ns_config(&uri.scope())?;
        let latest = self.live_record(uri)?.version();
        let active = self.nodes.keys().filter(|n| self.available(**n)).count();
        if active < self.cfg.replicas {
            return Err(Error::InsufficientReplicas { needed: self.cfg.replicas, available: active });
        }
        let version = latest.next();
        let stamp = self.stamp();
        let record = tombstone_record(uri, version, self.now(), stamp);
        self.write_version(record, None, stamp.lts)?;
        self.log(ChangeOp::DeleteObject, uri, version, stamp, ChangePayload::Tombstone)?;
        Ok(version)
    }

    pub(crate) fn set_partition(&mut self, uri: &ObjectUri, name: &str, value: Option<MetadataPartition>) -> Result<ObjectRecord> {
        let ns = uri.scope();
        let limits = self.limits(&ns);
        let mut record = self.live_record(uri)?.clone();
        match &value {
            Some(p) => {
                validate_partition(p, &limits).map_err(Error::InvalidPartition)?;
                if p.name != name {
                    return Err(Error::BadRequest(format!("partition name {:?} does not match {name:?}", p.name)));
                }
                if !record.partitions.contains_key(name) && record.partitions.len() >= limits.max_partitions {
                    return Err(Error::TooManyPartitions(limits.max_partitions));
                }
            }
            None => {
                if !record.partitions.contains_key(name) {
                    return Err(Error::PartitionNotFound(name.to_string()));
                }
            }
        }
        let stamp = self.stamp();
        apply_register(&mut record, stamp, Register::Partition { name: name.to_string(), value: value.clone() });
        record.system.updated_at = self.now();
        let version = record.version();
        self.rewrite_latest(record.clone(), stamp.lts)?;
        match value {
            Some(partition) => self.log(ChangeOp::PutAnnotation, uri, version, stamp, ChangePayload::Partition { partition })?,
            None => self.log(ChangeOp::DeleteAnnotation, uri, version, stamp, ChangePayload::PartitionName { name: name.to_string() })?,
        }
        Ok(record)
    }

    pub(crate) fn put_relation(&mut self, from: &ObjectUri, tag: RelationTag) -> Result<ObjectRecord> {
        validate_edge(&from.scope(), from, &tag.target, &tag.label, tag.weight)?;
        self.live_record(&tag.target)?;
        let mut record = self.live_record(from)?.clone();
        let stamp = self.stamp();
        apply_register(&mut record, stamp, Register::Relation(tag.clone()));
        record.system.updated_at = self.now();
        let version = record.version();
        self.rewrite_latest(record.clone(), stamp.lts)?;
        self.log(ChangeOp::PutRelation, from, version, stamp, ChangePayload::Relation { tag })?;
        Ok(record)
    }

    /// The record of a specific version, read from its sidecars.
    pub(crate) fn version_record(&self, uri: &ObjectUri, version: VersionId) -> Result<ObjectRecord> {
        let e = self.refdb.get(uri).ok_or_else(|| Error::NotFound(uri.to_string()))?;
        if version == e.latest {
            return Ok(e.record.clone());
        }
        let vref = e.versions.get(&version).ok_or_else(|| Error::NotFound(format!("{uri} version {version}")))?;
        let rel = sidecar_rel(uri, version);
        let mut best: Option<Sidecar> = None;
        for n in &vref.replicas {
            let Some(node) = self.nodes.get(n).filter(|n| n.up) else { continue };
            match node.disk.read(&rel).map_err(Error::from).and_then(|b| parse_sidecar(&b)) {
                Ok(s) if s.uri == *uri => {
                    if best.as_ref().is_none_or(|b| s.logical_ts > b.logical_ts) {
                        best = Some(s);
                    }
                }
                _ => {
                    self.repairs.lock().insert(RepairItem { uri: uri.clone(), version, node: *n });
                }
            }
        }
        best.map(|s| s.into_record())
            .ok_or(Error::InsufficientReplicas { needed: 1, available: 0 })
    }

    /// Find a replica whose blob matches the digest. Mismatching replicas are
    /// queued for repair.
    pub(crate) fn verified_replica(&self, record: &ObjectRecord) -> Result<NodeId> {
        let uri = &record.uri;
        let e = self.refdb.get(uri).ok_or_else(|| Error::NotFound(uri.to_string()))?;
        let vref = &e.versions[&record.version()];
        let rel = blob_path(&record.system.content_digest);
        let mut corrupt = false;
        for n in &vref.replicas {
            let Some(node) = self.nodes.get(n).filter(|n| n.up) else { continue };
            let verdict = node.disk.open(&rel).and_then(|mut r| sha_hex(&mut r));
            match verdict {
                Ok((d, size)) if d == record.system.content_digest && size == record.system.size => return Ok(*n),
                Ok(_) => corrupt = true,
                Err(_) => {}
            }
            self.repairs.lock().insert(RepairItem { uri: uri.clone(), version: record.version(), node: *n });
        }
        if corrupt {
            Err(Error::DigestMismatch(uri.to_string()))
        } else {
            Err(Error::InsufficientReplicas { needed: 1, available: 0 })
        }
    }

    pub(crate) fn resolve_read(&self, uri: &ObjectUri, version: Option<VersionId>) -> Result<ObjectRecord> {
        let e = self.refdb.get(uri).ok_or_else(|| Error::NotFound(uri.to_string()))?;
        let record = match version {
            None => e.record.clone(),
            Some(v) => self.version_record(uri, v)?,
        };
        if record.is_tombstone() {
            return Err(Error::Gone(format!("{uri} version {}", record.version())));
        }
        Ok(record)
    }

    pub(crate) fn read_blob(&self, record: &ObjectRecord) -> Result<Vec<u8>> {
        loop {
            let n = self.verified_replica(record)?;
            let bytes = self.nodes[&n].disk.read(&blob_path(&record.system.content_digest))?;
            // the file could change between verification and this read
            if content_digest(&bytes) == record.system.content_digest {
                return Ok(bytes);
            }
            self.repairs.lock().insert(RepairItem { uri: record.uri.clone(), version: record.version(), node: n });
        }
    }

    pub(crate) fn list_versions(&self, uri: &ObjectUri) -> Result<Vec<VersionInfo>> {
        let e = self.refdb.get(uri).ok_or_else(|| Error::NotFound(uri.to_string()))?;
        Ok(e.versions
            .iter()
            .map(|(v, r)| VersionInfo {
                version: *v,
                tombstone: r.tombstone,
                size: r.size,
                content_digest: r.digest.clone(),
                created_at: r.created_at,
            })
            .collect())
    }

    pub(crate) fn apply_admin(&mut self, record: &AdminRecord) -> Result<Option<u32>> {
        let out = match record {
            AdminRecord::Tenancy { op } => {
                self.registry.apply(op);
                if let AdminOp::CreateNamespace { config } = op {
                    let ns = config.id();
                    self.index.entry(ns.clone()).or_default();
                    self.graphs.entry(ns.clone()).or_insert_with(|| RelationGraph::new(ns));
                }
                None
            }
            AdminRecord::PublishDictionary { doc } => Some(self.pipelines.publish_dictionary(doc.clone())?),
            AdminRecord::PublishPipeline { doc } => Some(self.pipelines.publish_pipeline(doc.clone())?),
        };
        Ok(out)
    }
}

pub(crate) fn tombstone_record(uri: &ObjectUri, version: VersionId, now: u64, stamp: Stamp) -> ObjectRecord {
    ObjectRecord {
        uri: uri.clone(),
        system: SystemMetadata {
            size: 0,
            created_at: now,
            updated_at: now,
            content_digest: empty_digest(),
            version,
            tombstone: true,
        },
        partitions: BTreeMap::new(),
        relations: vec![],
        geo: GeoState { version: stamp, ..Default::default() },
    }
}

impl Store {
    pub fn new(cfg: StoreConfig, clock: Arc<dyn Clock>) -> Self {
        let changelog = ChangeLog::in_memory(cfg.cluster);
        Self::with_changelog(cfg, clock, changelog)
    }

    pub fn with_changelog(cfg: StoreConfig, clock: Arc<dyn Clock>, changelog: ChangeLog) -> Self {
        assert!(cfg.replicas >= 1);
        let inner = Inner {
            ring: PlacementRing::new(cfg.vnodes),
            refdb: ReferenceDb::new(cfg.shards),
            cfg,
            clock,
            nodes: BTreeMap::new(),
            view: None,
            index: BTreeMap::new(),
            graphs: BTreeMap::new(),
            changelog,
            lts: 0,
            registry: Registry::new(),
            pipelines: PipelineRegistry::new(),
            admin_log: Vec::new(),
            admin_file: None,
            repairs: Mutex::new(BTreeSet::new()),
        };
        Self { inner: RwLock::new(inner) }
    }

    pub fn config(&self) -> StoreConfig {
        self.inner.read().cfg.clone()
    }

    pub fn cluster_id(&self) -> u32 {
        self.inner.read().cfg.cluster
    }

    // ---- topology ----

    pub fn add_node(&self, id: NodeId, fault_domain: &str, disk: Arc<dyn Disk>) {
        let mut g = self.inner.write();
        g.nodes.insert(id, StorageNode { id, fault_domain: fault_domain.to_string(), disk, up: true });
        if !g.ring.contains(id) {
            g.ring = g.ring.update(RingChange::Add(id), &[]).0;
        }
    }

    pub fn set_node_up(&self, id: NodeId, up: bool) {
        if let Some(n) = self.inner.write().nodes.get_mut(&id) {
            n.up = up;
        }
    }

    /// Destroy a node's disk contents (permanent loss).
    pub fn wipe_node(&self, id: NodeId) -> Result<()> {
        let g = self.inner.read();
        if let Some(n) = g.nodes.get(&id) {
            n.disk.wipe()?;
        }
        Ok(())
    }

    pub fn node_disk(&self, id: NodeId) -> Option<Arc<dyn Disk>> {
        self.inner.read().nodes.get(&id).map(|n| n.disk.clone())
    }

    pub fn nodes(&self) -> Vec<NodeStatus> {
        self.inner
            .read()
            .nodes
            .values()
            .map(|n| NodeStatus { id: n.id, fault_domain: n.fault_domain.clone(), up: n.up, bytes_used: n.disk.bytes_used() })
            .collect()
    }

    /// Use `table`'s ACTIVE set for placement decisions (`None` trusts the
    /// nodes' own up flags).
    pub fn set_view(&self, table: Option<&MembershipTable>) {
        self.inner.write().view = table.map(|t| t.entries().map(|e| (e.node_id, e.state)).collect());
    }

    // ---- administration ----

    pub fn bootstrap_principal(&self, p: Principal) -> Result<()> {
        self.inner.write().registry.bootstrap_principal(p)
    }

    pub fn authenticate(&self, token: &str) -> Option<Principal> {
        self.inner.read().registry.authenticate(token).cloned()
    }

    pub fn registry(&self) -> Registry {
        self.inner.read().registry.clone()
    }

    pub fn namespace_config(&self, ns: &NamespaceId) -> Option<NamespaceConfig> {
        self.inner.read().registry.namespace(ns).cloned()
    }

    /// Replay and then append to a persisted admin log.
    pub fn attach_admin_log(&self, path: &Path) -> Result<()> {
        let mut g = self.inner.write();
        if path.exists() {
            let mut r = io::BufReader::new(std::fs::File::open(path)?);
            while let Some(rec) = wire::read_frame::<_, AdminRecord>(&mut r)? {
                g.apply_admin(&rec)?;
                g.admin_log.push(rec);
            }
        }
        g.admin_file = Some(std::fs::OpenOptions::new().create(true).append(true).open(path)?);
        Ok(())
    }

    pub fn admin_log(&self) -> Vec<AdminRecord> {
        self.inner.read().admin_log.clone()
    }

    /// Validate, persist and apply an administrative mutation. Publishing
    /// returns the new definition version.
    pub fn admin(&self, actor: &Principal, record: AdminRecord) -> Result<Option<u32>> {
        let mut g = self.inner.write();
        match &record {
            AdminRecord::Tenancy { op } => {
                let pipes = &g.pipelines;
                g.registry.check(actor, op, &|p| pipes.has_pipeline(p))?;
            }
            AdminRecord::PublishDictionary { doc } => {
                require_admin(actor)?;
                crate::pipeline::dictionary::compile_doc(doc.clone())?;
            }
            AdminRecord::PublishPipeline { doc } => {
                require_admin(actor)?;
                g.pipelines.compile(doc.clone())?;
            }
        }
        let out = g.apply_admin(&record)?;
        if let Some(f) = g.admin_file.as_mut() {
            use std::io::Write;
            f.write_all(&wire::encode(&record))?;
            f.sync_data()?;
        }
        g.admin_log.push(record);
        Ok(out)
    }

    pub fn dictionary_doc(&self, id: &str, version: Option<u32>) -> Option<(DictionaryDoc, u32)> {
        self.inner.read().pipelines.dictionary(id, version).map(|(d, v)| (d.doc.clone(), v))
    }

    pub fn pipeline_doc(&self, r: &str) -> Option<PipelineDoc> {
        self.inner.read().pipelines.pipeline(r).map(|p| p.doc.clone())
    }

    // ---- data path ----

    pub fn put_object(
        &self,
        actor: &Principal,
        uri: &ObjectUri,
        blob: &BlobSource,
        partitions: Vec<MetadataPartition>,
    ) -> Result<VersionId> {
        self.put_object_with_pipeline(actor, uri, blob, partitions).map(|(v, _)| v)
    }

    /// Put, then run the namespace pipeline (if any) on the new version.
    /// Pipeline failures do not undo the put; they come back in the run.
    pub fn put_object_with_pipeline(
        &self,
        actor: &Principal,
        uri: &ObjectUri,
        blob: &BlobSource,
        partitions: Vec<MetadataPartition>,
    ) -> Result<(VersionId, Option<PipelineRun>)> {
        require(actor, Action::WriteObject, &Resource::namespace(&uri.scope()))?;
        let mut g = self.inner.write();
        let v = g.put_object(uri, blob, partitions)?;
        let run = g.ingest_pipeline(uri);
        Ok((v, run))
    }

    pub fn get_object(&self, actor: &Principal, uri: &ObjectUri, version: Option<VersionId>) -> Result<(ObjectRecord, Vec<u8>)> {
        require(actor, Action::ReadObject, &Resource::namespace(&uri.scope()))?;
        let g = self.inner.read();
        g.ns_config(&uri.scope())?;
        let record = g.resolve_read(uri, version)?;
        let bytes = g.read_blob(&record)?;
        Ok((record, bytes))
    }

    /// Streaming read. The replica is verified in full before the stream is
    /// handed out.
    pub fn open_object(
        &self,
        actor: &Principal,
        uri: &ObjectUri,
        version: Option<VersionId>,
    ) -> Result<(ObjectRecord, Box<dyn Read + Send>)> {
        require(actor, Action::ReadObject, &Resource::namespace(&uri.scope()))?;
        let g = self.inner.read();
        g.ns_config(&uri.scope())?;
        let record = g.resolve_read(uri, version)?;
        let n = g.verified_replica(&record)?;
        let r = g.nodes[&n].disk.open(&blob_path(&record.system.content_digest))?;
        Ok((record, r))
    }

    pub fn head_object(&self, actor: &Principal, uri: &ObjectUri, version: Option<VersionId>) -> Result<ObjectRecord> {
        require(actor, Action::ReadObject, &Resource::namespace(&uri.scope()))?;
        let g = self.inner.read();
        g.ns_config(&uri.scope())?;
        g.resolve_read(uri, version)
    }

    pub fn delete_object(&self, actor: &Principal, uri: &ObjectUri) -> Result<VersionId> {
        require(actor, Action::WriteObject, &Resource::namespace(&uri.scope()))?;
        self.inner.write().delete_object(uri)
    }

    pub fn list_versions(&self, actor: &Principal, uri: &ObjectUri) -> Result<Vec<VersionInfo>> {
        require(actor, Action::ReadObject, &Resource::namespace(&uri.scope()))?;
        let g = self.inner.read();
        g.ns_config(&uri.scope())?;
        g.list_versions(uri)
    }

    pub fn put_annotation(&self, actor: &Principal, uri: &ObjectUri, partition: MetadataPartition) -> Result<ObjectRecord> {
        require(actor, Action::Annotate, &Resource::namespace(&uri.scope()))?;
        let mut g = self.inner.write();
        g.ns_config(&uri.scope())?;
        let name = partition.name.clone();
        g.set_partition(uri, &name, Some(partition))
    }

    pub fn get_annotation(&self, actor: &Principal, uri: &ObjectUri, name: &str) -> Result<MetadataPartition> {
        require(actor, Action::ReadObject, &Resource::namespace(&uri.scope()))?;
        let g = self.inner.read();
        g.ns_config(&uri.scope())?;
        let rec = g.live_record(uri)?;
        rec.partitions.get(name).cloned().ok_or_else(|| Error::PartitionNotFound(name.to_string()))
    }

    pub fn delete_annotation(&self, actor: &Principal, uri: &ObjectUri, name: &str) -> Result<ObjectRecord> {
        require(actor, Action::Annotate, &Resource::namespace(&uri.scope()))?;
        let mut g = self.inner.write();
        g.ns_config(&uri.scope())?;
        g.set_partition(uri, name, None)
    }

    /// Upsert the relation `from -label-> to`, stored on `from`'s record.
    pub fn put_relation(&self, actor: &Principal, from: &ObjectUri, to: &ObjectUri, label: &str, weight: f64) -> Result<ObjectRecord> {
        require(actor, Action::Annotate, &Resource::namespace(&from.scope()))?;
        let mut g = self.inner.write();
        g.ns_config(&from.scope())?;
        g.put_relation(from, RelationTag::new(label, to.clone(), weight))
    }

    // ---- internals exposed for tooling and the simulator ----

    pub fn refdb(&self) -> ReferenceDb {
        self.inner.read().refdb.clone()
    }

    pub fn lamport(&self) -> u64 {
        self.inner.read().lts
    }

    pub fn changelog_after(&self, cursor: u64) -> Vec<ChangeLogEntry> {
        self.inner.read().changelog.entries_after(cursor).to_vec()
    }

    pub fn changelog_last_seq(&self) -> u64 {
        self.inner.read().changelog.last_seq()
    }

    pub fn repair_queue(&self) -> BTreeSet<RepairItem> {
        self.inner.read().repairs.lock().clone()
    }

    pub fn index_snapshot(&self, ns: &NamespaceId) -> Option<IndexShard> {
        self.inner.read().index.get(ns).cloned()
    }

    pub fn graph_snapshot(&self, ns: &NamespaceId) -> Option<RelationGraph> {
        self.inner.read().graphs.get(ns).cloned()
    }

    /// Nodes hosting each reference-database shard.
    pub fn refdb_shard_placement(&self, copies: usize) -> Vec<Vec<NodeId>> {
        let g = self.inner.read();
        let mut table: Option<MembershipTable> = None;
        for n in g.nodes.values() {
            let info = crate::cluster::NodeInfo::new(n.id, "", n.fault_domain.clone());
            match table.as_mut() {
                None => table = Some(MembershipTable::new(info)),
                Some(t) => t.add_seed(info),
            }
        }
        let Some(mut t) = table else {
            return vec![Vec::new(); g.refdb.shard_count()];
        };
        for id in g.nodes.keys() {
            if !g.available(*id) {
                t.force_state(*id, NodeState::Failed);
            }
        }
        g.refdb.shard_placement(&g.ring, &t, copies)
    }
}

fn require_admin(actor: &Principal) -> Result<()> {
    match actor.role {
        crate::tenancy::Role::User { .. } => {
            Err(Error::Unauthorized(format!("{} may not publish definitions", actor.account)))
        }
        _ => Ok(()),
    }
}
