//! The object data model: URIs, versions, system metadata, metadata
//! partitions and relation tags, plus the content digest used everywhere a
//! stable hash is needed.

use std::cmp::Ordering;
use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Deserializer, Serialize, Serializer};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};

pub const URI_SCHEME: &str = "rdos://";
pub const MAX_URI_BYTES: usize = 4096;
pub const DEFAULT_RELATION_LABEL: &str = "RelTo";

/// Lowercase hex SHA-256 of `blob`.
pub fn content_digest(blob: &[u8]) -> String {
    hex::encode(Sha256::digest(blob))
}

/// Digest of the empty blob; tombstone versions carry it.
pub fn empty_digest() -> String {
    content_digest(&[])
}

/// First eight bytes of SHA-256, big-endian. Used for ring positions and
/// sharding.
pub fn hash64(bytes: &[u8]) -> u64 {
    let d = Sha256::digest(bytes);
    let mut b = [0u8; 8];
    b.copy_from_slice(&d[..8]);
    u64::from_be_bytes(b)
}

pub fn is_digest_hex(s: &str) -> bool {
    s.len() == 64 && s.bytes().all(|b| matches!(b, b'0'..=b'9' | b'a'..=b'f'))
}

fn valid_scope_id(s: &str) -> bool {
    !s.is_empty() && s.len() <= 64 && s.bytes().all(|b| matches!(b, b'a'..=b'z' | b'0'..=b'9' | b'-'))
}

/// Partition names: `[A-Za-z0-9_-]{1,64}`.
pub fn valid_partition_name(s: &str) -> bool {
    !s.is_empty()
        && s.len() <= 64
        && s.bytes().all(|b| b.is_ascii_alphanumeric() || b == b'_' || b == b'-')
}

/// An object address, `rdos://<tenant>/<namespace>/<path>`.
///
/// The canonical text is stored directly so ordering and hashing always agree
/// with the textual form.
#[derive(Clone, PartialEq, Eq, Hash)]
pub struct ObjectUri {
    text: String,
    tenant_end: usize,
    ns_end: usize,
}

impl ObjectUri {
    pub fn new(tenant: &str, namespace: &str, path: &str) -> Result<Self> {
        make_uri(tenant, namespace, path)
    }

    pub fn tenant(&self) -> &str {
        &self.text[URI_SCHEME.len()..self.tenant_end]
    }

    pub fn namespace(&self) -> &str {
        &self.text[self.tenant_end + 1..self.ns_end]
    }

    pub fn path(&self) -> &str {
        &self.text[self.ns_end + 1..]
    }

    pub fn as_str(&self) -> &str {
        &self.text
    }

    pub fn scope(&self) -> NamespaceId {
        NamespaceId {
            tenant: self.tenant().to_string(),
            namespace: self.namespace().to_string(),
        }
    }

    pub fn same_namespace(&self, other: &ObjectUri) -> bool {
        self.text[..self.ns_end] == other.text[..other.ns_end]
    }

    pub fn hash64(&self) -> u64 {
        hash64(self.text.as_bytes())
    }
}

/// Build a canonical URI. Repeated slashes in `path` collapse and a leading
/// slash is dropped.
pub fn make_uri(tenant: &str, namespace: &str, path: &str) -> Result<ObjectUri> {
    if !valid_scope_id(tenant) {
        return Err(Error::InvalidName(format!("tenant {tenant:?}")));
    }
    if !valid_scope_id(namespace) {
        return Err(Error::InvalidName(format!("namespace {namespace:?}")));
    }
    let mut canon = String::with_capacity(path.len());
    let mut last_slash = true;
    for c in path.chars() {
        if c == '/' {
            if !last_slash {
                canon.push('/');
            }
            last_slash = true;
        } else {
            canon.push(c);
            last_slash = false;
        }
    }
    if canon.is_empty() {
        return Err(Error::InvalidPath("empty path".into()));
    }
    for seg in canon.split('/') {
        match seg {
            "" => return Err(Error::InvalidPath(format!("empty segment in {path:?}"))),
            "." | ".." => return Err(Error::InvalidPath(format!("dot segment in {path:?}"))),
            _ => {}
        }
    }
    if canon.chars().any(|c| c.is_control()) {
        return Err(Error::InvalidPath("control character in path".into()));
    }
    let text = format!("{URI_SCHEME}{tenant}/{namespace}/{canon}");
    if text.len() > MAX_URI_BYTES {
        return Err(Error::InvalidPath(format!("uri is {} bytes", text.len())));
    }
    let tenant_end = URI_SCHEME.len() + tenant.len();
    let ns_end = tenant_end + 1 + namespace.len();
    Ok(ObjectUri { text, tenant_end, ns_end })
}

impl FromStr for ObjectUri {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let rest = s
            .strip_prefix(URI_SCHEME)
            .ok_or_else(|| Error::InvalidPath(format!("missing scheme in {s:?}")))?;
        let (tenant, rest) = rest
            .split_once('/')
            .ok_or_else(|| Error::InvalidPath(format!("missing namespace in {s:?}")))?;
        let (namespace, path) = rest
            .split_once('/')
            .ok_or_else(|| Error::InvalidPath(format!("missing path in {s:?}")))?;
        make_uri(tenant, namespace, path)
    }
}

impl Ord for ObjectUri {
    fn cmp(&self, other: &Self) -> Ordering {
        self.text.cmp(&other.text)
    }
}

impl PartialOrd for ObjectUri {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl fmt::Display for ObjectUri {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.text)
    }
}

impl fmt::Debug for ObjectUri {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "ObjectUri({})", self.text)
    }
}

impl Serialize for ObjectUri {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.serialize_str(&self.text)
    }
}

impl<'de> Deserialize<'de> for ObjectUri {
    fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

/// `(tenant, namespace)`: the storage unit every index, graph and pipeline is
/// scoped to.
#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct NamespaceId {
    pub tenant: String,
    pub namespace: String,
}

impl NamespaceId {
    pub fn new(tenant: &str, namespace: &str) -> Result<Self> {
        if !valid_scope_id(tenant) {
            return Err(Error::InvalidName(format!("tenant {tenant:?}")));
        }
        if !valid_scope_id(namespace) {
            return Err(Error::InvalidName(format!("namespace {namespace:?}")));
        }
        Ok(Self { tenant: tenant.into(), namespace: namespace.into() })
    }

    pub fn uri(&self, path: &str) -> Result<ObjectUri> {
        make_uri(&self.tenant, &self.namespace, path)
    }
}

impl fmt::Display for NamespaceId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}/{}", self.tenant, self.namespace)
    }
}

/// Per-URI version counter, starting at 1.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct VersionId(pub u64);

impl VersionId {
    pub const FIRST: VersionId = VersionId(1);

    pub fn next(self) -> VersionId {
        VersionId(self.0 + 1)
    }
}

impl fmt::Display for VersionId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct SystemMetadata {
    pub size: u64,
    pub created_at: u64,
    pub updated_at: u64,
    pub content_digest: String,
    pub version: VersionId,
    pub tombstone: bool,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct PartitionLimits {
    pub max_partitions: usize,
    pub max_key_bytes: usize,
    pub max_value_bytes: usize,
}

impl Default for PartitionLimits {
    fn default() -> Self {
        Self { max_partitions: 8, max_key_bytes: 256, max_value_bytes: 64 * 1024 }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "SCREAMING_SNAKE_CASE")]
pub enum Violation {
    InvalidName { name: String },
    EmptyKey,
    KeyTooLong { key: String, len: usize },
    DuplicateKey { key: String },
    ValueTooLarge { key: String, len: usize },
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Violation::InvalidName { name } => write!(f, "INVALID_NAME {name:?}"),
            Violation::EmptyKey => write!(f, "EMPTY_KEY"),
            Violation::KeyTooLong { key, len } => write!(f, "KEY_TOO_LONG {key:?} ({len} bytes)"),
            Violation::DuplicateKey { key } => write!(f, "DUPLICATE_KEY {key:?}"),
            Violation::ValueTooLarge { key, len } => {
                write!(f, "VALUE_TOO_LARGE {key:?} ({len} bytes)")
            }
        }
    }
}

/// A named, independently mutable set of key/value scalars. Values are text;
/// numeric interpretation happens in the query layer.
#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct MetadataPartition {
    pub name: String,
    pub pairs: BTreeMap<String, String>,
}

impl MetadataPartition {
    pub fn new(name: impl Into<String>) -> Self {
        Self { name: name.into(), pairs: BTreeMap::new() }
    }

    pub fn with(mut self, key: impl Into<String>, value: impl Into<String>) -> Self {
        self.pairs.insert(key.into(), value.into());
        self
    }

    /// Build from an ordered pair list, reporting duplicates and every other
    /// violation at once.
    pub fn from_pairs<K, V>(
        name: &str,
        pairs: impl IntoIterator<Item = (K, V)>,
        limits: &PartitionLimits,
    ) -> std::result::Result<Self, Vec<Violation>>
    where
        K: Into<String>,
        V: Into<String>,
    {
        let pairs: Vec<(String, String)> =
            pairs.into_iter().map(|(k, v)| (k.into(), v.into())).collect();
        let violations = validate_pairs(name, &pairs, limits);
        if !violations.is_empty() {
            return Err(violations);
        }
        Ok(Self { name: name.to_string(), pairs: pairs.into_iter().collect() })
    }

    /// Parse the `k=v;k=v` header form.
    pub fn parse_header_value(
        name: &str,
        text: &str,
        limits: &PartitionLimits,
    ) -> std::result::Result<Self, Vec<Violation>> {
        let mut pairs = Vec::new();
        for item in text.split(';') {
            let item = item.trim();
            if item.is_empty() {
                continue;
            }
            let (k, v) = item.split_once('=').unwrap_or((item, ""));
            pairs.push((k.trim().to_string(), v.trim().to_string()));
        }
        Self::from_pairs(name, pairs, limits)
    }
}

fn validate_pairs(name: &str, pairs: &[(String, String)], limits: &PartitionLimits) -> Vec<Violation> {
    let mut out = Vec::new();
    if !valid_partition_name(name) {
        out.push(Violation::InvalidName { name: name.to_string() });
    }
    let mut seen = std::collections::BTreeSet::new();
    for (k, v) in pairs {
        if k.is_empty() {
            out.push(Violation::EmptyKey);
        } else if k.len() > limits.max_key_bytes {
            out.push(Violation::KeyTooLong { key: k.clone(), len: k.len() });
        }
        if !seen.insert(k.as_str()) {
            out.push(Violation::DuplicateKey { key: k.clone() });
        }
        if v.len() > limits.max_value_bytes {
            out.push(Violation::ValueTooLarge { key: k.clone(), len: v.len() });
        }
    }
    out
}

/// Check a partition against `limits`, returning every violation found.
pub fn validate_partition(p: &MetadataPartition, limits: &PartitionLimits) -> std::result::Result<(), Vec<Violation>> {
    let pairs: Vec<(String, String)> = p.pairs.iter().map(|(k, v)| (k.clone(), v.clone())).collect();
    let v = validate_pairs(&p.name, &pairs, limits);
    if v.is_empty() {
        Ok(())
    } else {
        Err(v)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RelationTag {
    pub label: String,
    pub target: ObjectUri,
    pub weight: f64,
}

impl RelationTag {
    pub fn new(label: impl Into<String>, target: ObjectUri, weight: f64) -> Self {
        Self { label: label.into(), target, weight }
    }

    pub fn key(&self) -> (&str, &ObjectUri) {
        (&self.label, &self.target)
    }
}

/// Lamport stamp for last-writer-wins between clusters. Ties on `lts` go to
/// the higher cluster id.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct Stamp {
    pub lts: u64,
    pub cluster: u32,
}

impl Stamp {
    pub fn new(lts: u64, cluster: u32) -> Self {
        Self { lts, cluster }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RelationStamp {
    pub label: String,
    pub target: ObjectUri,
    pub stamp: Stamp,
}

/// A register write that arrived for an object whose winning version is a
/// tombstone. Kept so that a later resurrection is independent of arrival order.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ShadowRegister {
    Partition { stamp: Stamp, name: String, partition: Option<MetadataPartition> },
    Relation { stamp: Stamp, tag: RelationTag },
}

/// Conflict-resolution state carried with each record.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct GeoState {
    /// Stamp of the operation that produced this version.
    pub version: Stamp,
    pub partitions: BTreeMap<String, Stamp>,
    pub removed: BTreeMap<String, Stamp>,
    pub relations: Vec<RelationStamp>,
    pub shadow: Vec<ShadowRegister>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ObjectRecord {
    pub uri: ObjectUri,
    pub system: SystemMetadata,
    pub partitions: BTreeMap<String, MetadataPartition>,
    pub relations: Vec<RelationTag>,
    pub geo: GeoState,
}

impl ObjectRecord {
    pub fn version(&self) -> VersionId {
        self.system.version
    }

    pub fn is_tombstone(&self) -> bool {
        self.system.tombstone
    }

    pub fn relation(&self, label: &str, target: &ObjectUri) -> Option<&RelationTag> {
        self.relations.iter().find(|t| t.label == label && &t.target == target)
    }

    /// Every `(partition, key, value)` triple on this record.
    pub fn scalars(&self) -> impl Iterator<Item = (&str, &str, &str)> {
        self.partitions.values().flat_map(|p| {
            p.pairs.iter().map(move |(k, v)| (p.name.as_str(), k.as_str(), v.as_str()))
        })
    }
}
