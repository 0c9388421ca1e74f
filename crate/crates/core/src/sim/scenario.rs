//! Scenario scripts: deployment shape plus a sequential event list.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Check {
    Durability,
    ReadYourWrites,
    ScavengerEquivalence,
    GeoConvergence,
    GossipConvergence,
}

impl Check {
    pub const ALL: [Check; 5] = [
        Check::Durability,
        Check::ReadYourWrites,
        Check::ScavengerEquivalence,
        Check::GeoConvergence,
        Check::GossipConvergence,
    ];
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NetworkModel {
    /// Inclusive per-message delay range in ticks.
    #[serde(default = "default_delay")]
    pub delay: (u64, u64),
    #[serde(default)]
    pub drop: f64,
}

fn default_delay() -> (u64, u64) {
    (1, 1)
}

impl Default for NetworkModel {
    fn default() -> Self {
        Self { delay: default_delay(), drop: 0.0 }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GossipParams {
    #[serde(default = "default_fanout")]
    pub fanout: usize,
    #[serde(default = "default_suspect")]
    pub t_suspect: u64,
    #[serde(default = "default_fail")]
    pub t_fail: u64,
}

fn default_fanout() -> usize {
    3
}
fn default_suspect() -> u64 {
    5
}
fn default_fail() -> u64 {
    10
}

impl Default for GossipParams {
    fn default() -> Self {
        Self { fanout: default_fanout(), t_suspect: default_suspect(), t_fail: default_fail() }
    }
}

fn one() -> u32 {
    1
}

fn default_ns() -> String {
    "acme/sim".into()
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CorruptTarget {
    Blob,
    Sidecar,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CorruptMode {
    /// Flip every bit of the first byte.
    Flip,
    /// Keep the first half.
    Truncate,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "event", rename_all = "snake_case", deny_unknown_fields)]
pub enum Event {
    Put {
        #[serde(default = "one")]
        cluster: u32,
        path: String,
        #[serde(default)]
        body: Option<String>,
        /// Random body of this many bytes when `body` is absent.
        #[serde(default)]
        size: Option<usize>,
        #[serde(default)]
        partitions: BTreeMap<String, BTreeMap<String, String>>,
    },
    Get {
        #[serde(default = "one")]
        cluster: u32,
        path: String,
        #[serde(default)]
        version: Option<u64>,
    },
    Annotate {
        #[serde(default = "one")]
        cluster: u32,
        path: String,
        partition: String,
        pairs: BTreeMap<String, String>,
    },
    Unannotate {
        #[serde(default = "one")]
        cluster: u32,
        path: String,
        partition: String,
    },
    Delete {
        #[serde(default = "one")]
        cluster: u32,
        path: String,
    },
    Relate {
        #[serde(default = "one")]
        cluster: u32,
        from: String,
        to: String,
        #[serde(default)]
        label: Option<String>,
        #[serde(default)]
        weight: Option<f64>,
    },
    Crash {
        #[serde(default = "one")]
        cluster: u32,
        node: u64,
        /// Permanent loss: the disk is destroyed.
        #[serde(default)]
        wipe: bool,
    },
    /// Crash `count` of the nodes holding the latest version of `path`.
    CrashReplicas {
        #[serde(default = "one")]
        cluster: u32,
        path: String,
        count: usize,
        #[serde(default)]
        wipe: bool,
    },
    Restart {
        #[serde(default = "one")]
        cluster: u32,
        node: u64,
    },
    Join {
        #[serde(default = "one")]
        cluster: u32,
        node: u64,
        fault_domain: String,
    },
    Partition {
        #[serde(default = "one")]
        cluster: u32,
        name: String,
        sides: Vec<Vec<u64>>,
    },
    Heal {
        name: String,
    },
    CutGeo,
    HealGeo,
    Corrupt {
        #[serde(default = "one")]
        cluster: u32,
        path: String,
        #[serde(default)]
        version: Option<u64>,
        /// Which replica, by index into the sorted replica set.
        #[serde(default)]
        replica: usize,
        target: CorruptTarget,
        mode: CorruptMode,
    },
    Tick {
        #[serde(default = "one_u64")]
        n: u64,
    },
    Repair {
        #[serde(default = "one")]
        cluster: u32,
    },
    Rebuild {
        #[serde(default = "one")]
        cluster: u32,
    },
    Ship,
    /// Seeded random client traffic, optionally with node crashes.
    Workload {
        #[serde(default = "one")]
        cluster: u32,
        ops: usize,
        #[serde(default = "default_paths")]
        paths: usize,
        #[serde(default)]
        crashes: bool,
    },
    /// Record probes for the scenario's checks at this point.
    Probe,
}

fn one_u64() -> u64 {
    1
}

fn default_paths() -> usize {
    64
}

/// What each node's membership table starts with.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Seeding {
    /// Every node is configured with the full member list.
    #[default]
    Full,
    /// Nodes know only node 1; node 1 knows nobody.
    Introducer,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Scenario {
    pub name: String,
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "one")]
    pub clusters: u32,
    pub nodes: usize,
    #[serde(default = "default_domains")]
    pub fault_domains: usize,
    #[serde(default = "default_replicas")]
    pub replicas: usize,
    /// `tenant/namespace` all client paths live in.
    #[serde(default = "default_ns")]
    pub namespace: String,
    #[serde(default)]
    pub network: NetworkModel,
    #[serde(default)]
    pub gossip: GossipParams,
    #[serde(default)]
    pub seeding: Seeding,
    /// Ticks between background repair passes; 0 disables.
    #[serde(default = "default_repair")]
    pub repair_interval: u64,
    /// Ticks between geo shipping rounds; 0 ships only on `ship`.
    #[serde(default = "one_u64")]
    pub geo_interval: u64,
    #[serde(default)]
    pub script: Vec<Event>,
    #[serde(default)]
    pub checks: Vec<Check>,
}

fn default_domains() -> usize {
    3
}
fn default_replicas() -> usize {
    3
}
fn default_repair() -> u64 {
    5
}

fn bad(msg: impl Into<String>) -> Error {
    Error::Scenario(msg.into())
}

impl Scenario {
    pub fn parse(bytes: &[u8]) -> Result<Scenario> {
        let de = &mut serde_json::Deserializer::from_slice(bytes);
        let s: Scenario = serde_path_to_error::deserialize(de).map_err(|e| bad(format!("{}: {}", e.path(), e.inner())))?;
        s.validate()?;
        Ok(s)
    }

    pub fn validate(&self) -> Result<()> {
        if self.nodes == 0 || self.nodes > 256 {
            return Err(bad("nodes must be in 1..=256"));
        }
        if !(1..=2).contains(&self.clusters) {
            return Err(bad("clusters must be 1 or 2"));
        }
        if self.replicas == 0 || self.fault_domains == 0 {
            return Err(bad("replicas and fault_domains must be positive"));
        }
        let (lo, hi) = self.network.delay;
        if lo == 0 || lo > hi {
            return Err(bad("network.delay must satisfy 1 <= min <= max"));
        }
        if !(0.0..=1.0).contains(&self.network.drop) {
            return Err(bad("network.drop must be within [0, 1]"));
        }
        if self.gossip.t_suspect == 0 || self.gossip.t_fail <= self.gossip.t_suspect {
            return Err(bad("gossip thresholds need t_fail > t_suspect > 0"));
        }
        match self.namespace.split_once('/') {
            Some((t, n)) => {
                crate::model::NamespaceId::new(t, n).map_err(|e| bad(format!("namespace: {e}")))?;
            }
            None => return Err(bad("namespace must be tenant/namespace")),
        }
        for (i, ev) in self.script.iter().enumerate() {
            let cluster = match ev {
                Event::Put { cluster, body, size, .. } => {
                    if body.is_some() && size.is_some() {
                        return Err(bad(format!("script[{i}]: give body or size, not both")));
                    }
                    Some(*cluster)
                }
                Event::Get { cluster, .. }
                | Event::Annotate { cluster, .. }
                | Event::Unannotate { cluster, .. }
                | Event::Delete { cluster, .. }
                | Event::Relate { cluster, .. }
                | Event::Crash { cluster, .. }
                | Event::CrashReplicas { cluster, .. }
                | Event::Restart { cluster, .. }
                | Event::Join { cluster, .. }
                | Event::Partition { cluster, .. }
                | Event::Corrupt { cluster, .. }
                | Event::Repair { cluster }
                | Event::Rebuild { cluster }
                | Event::Workload { cluster, .. } => Some(*cluster),
                Event::CutGeo | Event::HealGeo | Event::Ship if self.clusters < 2 => {
                    return Err(bad(format!("script[{i}]: geo events need two clusters")));
                }
                _ => None,
            };
            if let Some(c) = cluster {
                if c == 0 || c > self.clusters {
                    return Err(bad(format!("script[{i}]: no cluster {c}")));
                }
            }
        }
        Ok(())
    }

    pub fn to_json(&self) -> Vec<u8> {
        crate::canonical::to_vec(self).expect("scenario serializes")
    }
}
