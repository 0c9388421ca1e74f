//! Node configuration file.
//!
//! ```toml
//! listen = "127.0.0.1:7480"
//! cluster = 1
//! replicas = 3
//! admin_log = "/var/lib/rdos/admin.log"
//!
//! [[nodes]]
//! id = 1
//! fault_domain = "rack-a"
//! root = "/var/lib/rdos/n1"
//!
//! [[principals]]
//! account = "root"
//! token = "change-me"
//! role = { kind = "SYSTEM_ADMIN" }
//! ```

use std::net::SocketAddr;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use rdos_core::cluster::NodeId;
use rdos_core::storage::{FsDisk, Store, StoreConfig, SystemClock, DEFAULT_MAX_BLOB};
use rdos_core::tenancy::Principal;
use rdos_core::{Error, Result};
use serde::Deserialize;

#[derive(Clone, Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NodeConfig {
    pub id: u64,
    pub fault_domain: String,
    /// Storage root for this node's blobs and sidecars.
    pub root: PathBuf,
}

#[derive(Clone, Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Config {
    #[serde(default = "default_listen")]
    pub listen: SocketAddr,
    #[serde(default = "one")]
    pub cluster: u32,
    #[serde(default = "three")]
    pub replicas: usize,
    #[serde(default = "default_max_blob")]
    pub max_blob: u64,
    /// Where uploads are spooled before replication; defaults to the
    /// system temp dir.
    #[serde(default)]
    pub spool_dir: Option<PathBuf>,
    #[serde(default)]
    pub admin_log: Option<PathBuf>,
    /// Storage nodes this gateway serves.
    pub nodes: Vec<NodeConfig>,
    /// Static bearer tokens.
    #[serde(default)]
    pub principals: Vec<Principal>,
}

fn default_listen() -> SocketAddr {
    "127.0.0.1:7480".parse().expect("literal address")
}
fn one() -> u32 {
    1
}
fn three() -> usize {
    3
}
fn default_max_blob() -> u64 {
    DEFAULT_MAX_BLOB
}

impl Config {
    pub fn parse(text: &str) -> Result<Config> {
        let c: Config = toml::from_str(text).map_err(|e| Error::InvalidConfig(e.to_string()))?;
        if c.nodes.is_empty() {
            return Err(Error::InvalidConfig("at least one node is required".into()));
        }
        Ok(c)
    }

    pub fn load(path: &Path) -> Result<Config> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::InvalidConfig(format!("{}: {e}", path.display())))?;
        Self::parse(&text)
    }

    /// Open every node's storage, replay the admin log and rebuild the
    /// reference database from the sidecars on disk.
    pub fn open_store(&self) -> Result<Arc<Store>> {
        let cfg = StoreConfig {
            cluster: self.cluster,
            coordinator: NodeId(self.nodes[0].id),
            replicas: self.replicas,
            max_blob: self.max_blob,
            ..Default::default()
        };
        let store = Arc::new(Store::new(cfg, Arc::new(SystemClock)));
        for n in &self.nodes {
            store.add_node(NodeId(n.id), &n.fault_domain, Arc::new(FsDisk::open(&n.root)?));
        }
        for p in &self.principals {
            store.bootstrap_principal(p.clone())?;
        }
        if let Some(log) = &self.admin_log {
            store.attach_admin_log(log)?;
        }
        let report = store.rebuild();
        if !report.corrupt.is_empty() {
            tracing::warn!(corrupt = report.corrupt.len(), "corrupt files found while scanning storage");
        }
        Ok(store)
    }
}
