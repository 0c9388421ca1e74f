//! Invariant checks evaluated purely from a trace.

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use super::scenario::Check;
use super::trace::{ClientOp, ReadOutcome, Trace, TraceKind};

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct InvariantViolation {
    pub check: Check,
    pub tick: u64,
    pub detail: String,
}

/// Codes that mean "could not serve right now" rather than "wrong answer".
const UNAVAILABLE: [&str; 2] = ["INSUFFICIENT_REPLICAS", "DIGEST_MISMATCH"];

/// Ticks allowed for gossip to converge among `n` members.
pub fn gossip_bound(n: usize) -> u64 {
    (n.max(1) as f64).log2().ceil() as u64 + 4
}

pub fn check_invariants(trace: &Trace, checks: &[Check]) -> Vec<InvariantViolation> {
    let wanted: BTreeSet<Check> = checks.iter().copied().collect();
    let mut out = Vec::new();
    let geo = trace.iter().any(|e| matches!(e.kind, TraceKind::Init { clusters, .. } if clusters > 1));
    let end = trace.iter().last().map(|e| e.tick).unwrap_or(0);
    let v = |check, tick, detail: String| InvariantViolation { check, tick, detail };

    // (cluster, path) → (highest acked version, last acked op)
    let mut acked: BTreeMap<(u32, &str), (u64, ClientOp)> = BTreeMap::new();
    // cluster → (start tick, members) of the epoch still waiting to converge
    let mut epochs: BTreeMap<u32, (u64, usize)> = BTreeMap::new();
    let mut geo_rounds: BTreeMap<u64, Vec<(u32, &str)>> = BTreeMap::new();

    for e in trace.iter() {
        match &e.kind {
            TraceKind::Ack { cluster, op, path, version, .. } => {
                let slot = acked.entry((*cluster, path.as_str())).or_insert((0, *op));
                if *version >= slot.0 {
                    *slot = (*version, *op);
                }
            }
            TraceKind::Read { cluster, path, version: None, outcome } if wanted.contains(&Check::ReadYourWrites) => {
                let Some(&(floor, last_op)) = acked.get(&(*cluster, path.as_str())) else { continue };
                match outcome {
                    ReadOutcome::Ok { version, .. } if *version < floor => out.push(v(
                        Check::ReadYourWrites,
                        e.tick,
                        format!("cluster {cluster} read {path} v{version} after v{floor} was acknowledged"),
                    )),
                    ReadOutcome::Ok { .. } => {}
                    ReadOutcome::Err { code } if UNAVAILABLE.contains(&code.as_str()) => {}
                    ReadOutcome::Err { code } if code == "GONE" && (last_op == ClientOp::Delete || geo) => {}
                    ReadOutcome::Err { code } => out.push(v(
                        Check::ReadYourWrites,
                        e.tick,
                        format!("cluster {cluster} read {path} failed with {code} after v{floor} was acknowledged"),
                    )),
                }
            }
            TraceKind::ProbeRead { cluster, path, version, expected, outcome } if wanted.contains(&Check::Durability) => {
                match outcome {
                    ReadOutcome::Ok { digest, .. } if digest == expected => {}
                    ReadOutcome::Ok { digest, .. } => out.push(v(
                        Check::Durability,
                        e.tick,
                        format!("cluster {cluster} {path} v{version}: read {digest}, acknowledged {expected}"),
                    )),
                    ReadOutcome::Err { code } => out.push(v(
                        Check::Durability,
                        e.tick,
                        format!("cluster {cluster} {path} v{version}: acknowledged write unreadable ({code})"),
                    )),
                }
            }
            TraceKind::ProbeScavenge { cluster, equal: false, differing, .. }
                if wanted.contains(&Check::ScavengerEquivalence) =>
            {
                out.push(v(
                    Check::ScavengerEquivalence,
                    e.tick,
                    format!("cluster {cluster}: scavenged database differs for {}", differing.join(", ")),
                ));
            }
            TraceKind::ProbeGeo { round, cluster, digest, .. } => {
                geo_rounds.entry(*round).or_default().push((*cluster, digest.as_str()));
            }
            TraceKind::GossipEpoch { cluster, members } => {
                // a newer epoch restarts the clock; an overdue pending one is reported first
                if let Some((start, n)) = epochs.get(cluster) {
                    if e.tick - start > gossip_bound(*n) && wanted.contains(&Check::GossipConvergence) {
                        out.push(v(
                            Check::GossipConvergence,
                            e.tick,
                            format!("cluster {cluster}: no convergence within {} ticks of tick {start}", gossip_bound(*n)),
                        ));
                    }
                }
                epochs.insert(*cluster, (e.tick, *members));
            }
            TraceKind::GossipConverged { cluster } => {
                if let Some((start, n)) = epochs.remove(cluster) {
                    let took = e.tick - start;
                    if took > gossip_bound(n) && wanted.contains(&Check::GossipConvergence) {
                        out.push(v(
                            Check::GossipConvergence,
                            e.tick,
                            format!("cluster {cluster}: converged after {took} ticks, bound {}", gossip_bound(n)),
                        ));
                    }
                }
            }
            _ => {}
        }
    }
    if wanted.contains(&Check::GossipConvergence) {
        for (cluster, (start, n)) in epochs {
            if end - start > gossip_bound(n) {
                out.push(v(
                    Check::GossipConvergence,
                    end,
                    format!("cluster {cluster}: never converged after tick {start} (bound {})", gossip_bound(n)),
                ));
            }
        }
    }
    if wanted.contains(&Check::GeoConvergence) {
        for (round, states) in geo_rounds {
            let digests: BTreeSet<&str> = states.iter().map(|(_, d)| *d).collect();
            if digests.len() > 1 {
                out.push(v(Check::GeoConvergence, end, format!("probe round {round}: clusters hold different states")));
            }
        }
    }
    out
}
