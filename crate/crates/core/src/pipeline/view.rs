use std::collections::BTreeMap;

use super::text::{tokenize, Token};
use crate::model::{MetadataPartition, ObjectUri, SystemMetadata};

/// Pseudo-partition exposing system metadata to selectors, e.g.
/// `$sys.size>1000`. The `$` keeps it disjoint from real partition names.
pub const SYS_PARTITION: &str = "$sys";

/// An object as seen mid-pipeline.
#[derive(Clone, Debug, PartialEq)]
pub struct ObjectView {
    pub uri: ObjectUri,
    pub system: SystemMetadata,
    /// `None` for binary content.
    pub tokens: Option<Vec<Token>>,
    pub accumulated: BTreeMap<String, BTreeMap<String, String>>,
    sys: BTreeMap<String, String>,
    glob_subject: String,
}

impl ObjectView {
    pub fn new<'a>(
        uri: ObjectUri,
        system: SystemMetadata,
        blob: &[u8],
        partitions: impl IntoIterator<Item = &'a MetadataPartition>,
    ) -> Self {
        let tokens = tokenize(blob);
        Self::with_tokens(uri, system, tokens, partitions)
    }

    pub fn with_tokens<'a>(
        uri: ObjectUri,
        system: SystemMetadata,
        tokens: Option<Vec<Token>>,
        partitions: impl IntoIterator<Item = &'a MetadataPartition>,
    ) -> Self {
        let mut sys = BTreeMap::new();
        sys.insert("size".to_string(), system.size.to_string());
        sys.insert("created_at".to_string(), system.created_at.to_string());
        sys.insert("updated_at".to_string(), system.updated_at.to_string());
        sys.insert("version".to_string(), system.version.to_string());
        sys.insert("digest".to_string(), system.content_digest.clone());
        sys.insert("tenant".to_string(), uri.tenant().to_string());
        sys.insert("namespace".to_string(), uri.namespace().to_string());
        sys.insert("path".to_string(), uri.path().to_string());
        let glob_subject = format!("{}/{}", uri.namespace(), uri.path());
        let accumulated = partitions.into_iter().map(|p| (p.name.clone(), p.pairs.clone())).collect();
        Self { uri, system, tokens, accumulated, sys, glob_subject }
    }

    /// `<namespace>/<path>`, the string URI globs are matched against.
    pub fn glob_subject(&self) -> &str {
        &self.glob_subject
    }

    /// System pseudo-pairs followed by accumulated pairs.
    pub fn scalars(&self) -> impl Iterator<Item = (&str, &str, &str)> {
        self.sys.iter().map(|(k, v)| (SYS_PARTITION, k.as_str(), v.as_str())).chain(
            self.accumulated
                .iter()
                .flat_map(|(p, m)| m.iter().map(move |(k, v)| (p.as_str(), k.as_str(), v.as_str()))),
        )
    }

    /// Values of `key` in any accumulated partition.
    pub fn values_of(&self, key: &str) -> Vec<&str> {
        let mut v: Vec<&str> = self.accumulated.values().filter_map(|m| m.get(key).map(|s| s.as_str())).collect();
        v.sort();
        v.dedup();
        v
    }
}
