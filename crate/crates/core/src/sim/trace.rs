//! The append-only simulation event log.

use serde::{Deserialize, Serialize};

use crate::cluster::{NodeId, NodeState};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MsgKind {
    Push,
    Reply,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ClientOp {
    Put,
    Delete,
    Annotate,
    Unannotate,
    Relate,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "result", rename_all = "snake_case")]
pub enum ReadOutcome {
    Ok { version: u64, digest: String },
    Err { code: String },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "ev", rename_all = "snake_case")]
pub enum TraceKind {
    Init { scenario: String, seed: u64, clusters: u32, nodes: Vec<(NodeId, String)>, replicas: usize },
    Send { cluster: u32, id: u64, from: NodeId, to: NodeId, kind: MsgKind },
    Deliver { cluster: u32, id: u64 },
    Drop { cluster: u32, id: u64, reason: String },
    Transition { cluster: u32, observer: NodeId, node: NodeId, from: NodeState, to: NodeState },
    /// Membership changed; tables must agree again.
    GossipEpoch { cluster: u32, members: usize },
    GossipConverged { cluster: u32 },
    Ack { cluster: u32, op: ClientOp, path: String, version: u64, digest: Option<String> },
    Reject { cluster: u32, op: ClientOp, path: String, code: String },
    Read { cluster: u32, path: String, version: Option<u64>, outcome: ReadOutcome },
    Crash { cluster: u32, node: NodeId, wipe: bool },
    Restart { cluster: u32, node: NodeId },
    Join { cluster: u32, node: NodeId, fault_domain: String },
    Partition { cluster: u32, name: String },
    Heal { name: String },
    GeoCut,
    GeoHeal,
    Corrupt { cluster: u32, node: NodeId, file: String },
    Repair { cluster: u32, restored: usize, added: usize, lost: usize },
    Rebuild { cluster: u32, corrupt: usize, orphaned: usize },
    Ship { from: u32, to: u32, entries: usize, cursor: u64 },
    ShipFailed { from: u32, to: u32, code: String },
    ProbeRead { cluster: u32, path: String, version: u64, expected: String, outcome: ReadOutcome },
    ProbeScavenge { cluster: u32, equal: bool, differing: Vec<String>, corrupt: usize, skipped: Vec<NodeId> },
    ProbeGeo { round: u64, cluster: u32, digest: String, live: usize },
    End,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TraceEvent {
    pub tick: u64,
    #[serde(flatten)]
    pub kind: TraceKind,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Trace {
    pub events: Vec<TraceEvent>,
}

impl Trace {
    pub fn push(&mut self, tick: u64, kind: TraceKind) {
        self.events.push(TraceEvent { tick, kind });
    }

    pub fn len(&self) -> usize {
        self.events.len()
    }

    pub fn is_empty(&self) -> bool {
        self.events.is_empty()
    }

    /// One canonical JSON object per line.
    pub fn to_jsonl(&self) -> Vec<u8> {
        let mut out = Vec::new();
        for e in &self.events {
            out.extend(crate::canonical::to_vec(e).expect("trace events serialize"));
            out.push(b'\n');
        }
        out
    }

    pub fn from_jsonl(bytes: &[u8]) -> crate::Result<Trace> {
        let mut events = Vec::new();
        for (i, line) in bytes.split(|b| *b == b'\n').enumerate() {
            if line.iter().all(u8::is_ascii_whitespace) {
                continue;
            }
            let e = serde_json::from_slice(line)
                .map_err(|e| crate::Error::Scenario(format!("trace line {}: {e}", i + 1)))?;
            events.push(e);
        }
        Ok(Trace { events })
    }

    pub fn iter(&self) -> impl Iterator<Item = &TraceEvent> {
        self.events.iter()
    }
}
