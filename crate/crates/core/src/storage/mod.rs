//! Durable write/read path.

pub mod changelog;
pub mod disk;
mod engine;
pub mod geo;
pub mod lww;
mod pipeline_exec;
mod query_api;
pub mod refdb;
mod repair;
pub mod scavenge;
pub mod sidecar;

pub use changelog::{ChangeLog, ChangeLogEntry, ChangeOp, ChangePayload};
pub use disk::{Disk, FsDisk, MemDisk};
pub use engine::{
    AdminRecord, BlobSource, Clock, ManualClock, NodeStatus, RepairItem, Store, StoreConfig, SystemClock,
    VersionInfo, DEFAULT_MAX_BLOB, MAX_EXTRACT_BYTES,
};
pub use geo::{geo_ship, BlobFetch, GeoPeer, Link};
pub use pipeline_exec::{BackfillFailure, BackfillReport, RunCounts};
pub use refdb::{RefEntry, ReferenceDb, VersionRef};
pub use repair::RepairReport;
pub use scavenge::{scavenge, FileProblem, ScanTarget, ScavengeReport};
pub use sidecar::{parse_sidecar, serialize_sidecar, Sidecar};
