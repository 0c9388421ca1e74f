//! Cluster membership and data placement.

pub mod membership;
pub mod ring;
pub mod wire;

pub use membership::{
    merge_membership, DetectorConfig, GossipEntry, MembershipDigest, MembershipTable, NodeId, NodeInfo, NodeState,
    Transition,
};
pub use ring::{ownership_counts, remap, ring_owners, ring_update, Candidate, Placement, PlacementRing, RemapReport, RingChange, DEFAULT_VNODES};
