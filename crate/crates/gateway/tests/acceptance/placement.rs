use std::collections::{BTreeMap, BTreeSet};

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rdos_core::cluster::{ownership_counts, ring_update, Candidate, NodeId, PlacementRing, RingChange, DEFAULT_VNODES};
use rdos_core::model::{make_uri, ObjectUri};
use sha2::{Digest, Sha256};

const CONFIGS: usize = 2000;
const REMAP_KEYS: usize = 100_000;

fn keys(n: usize) -> Vec<ObjectUri> {
    (0..n).map(|i| make_uri("t", "ns", &format!("obj/{i:06}")).unwrap()).collect()
}

fn h64(bytes: &[u8]) -> u64 {
    u64::from_be_bytes(Sha256::digest(bytes)[..8].try_into().unwrap())
}

/// Sorted vnode positions computed straight from the hash definition.
fn oracle_vnodes(nodes: &[u64]) -> Vec<(u64, u64)> {
    let mut out = Vec::new();
    for &n in nodes {
        for i in 0..DEFAULT_VNODES as u32 {
            let mut buf = n.to_be_bytes().to_vec();
            buf.extend_from_slice(&i.to_be_bytes());
            out.push((h64(&buf), n));
        }
    }
    out.sort();
    out
}

fn oracle_primary(vnodes: &[(u64, u64)], key: &ObjectUri) -> u64 {
    let kh = h64(key.as_str().as_bytes());
    let i = vnodes.partition_point(|(p, _)| *p < kh);
    vnodes[i % vnodes.len()].1
}

fn distinctness() -> Result<usize, String> {
    let mut rng = ChaCha8Rng::seed_from_u64(77);
    let key_pool = keys(500);
    for case in 0..CONFIGS {
        let r = rng.gen_range(1..=4);
        let domains = rng.gen_range(r..=6);
        let n = rng.gen_range(domains..=24);
        let mut ids: Vec<u64> = (1..=40).collect();
        ids.shuffle(&mut rng);
        ids.truncate(n);
        let dom: BTreeMap<u64, String> = ids.iter().enumerate().map(|(i, id)| (*id, format!("d{}", i % domains))).collect();
        let load: BTreeMap<u64, f64> = ids.iter().map(|id| (*id, rng.gen_range(0.0..100.0))).collect();
        let ring = PlacementRing::build(ids.iter().map(|i| NodeId(*i)), DEFAULT_VNODES);
        let key = key_pool.choose(&mut rng).unwrap();
        let p = ring
            .select(key.hash64(), r, |id| Some(Candidate { fault_domain: dom[&id.0].as_str(), load: load[&id.0] }))
            .map_err(|e| format!("case {case}: {e}"))?;
        let nodes: BTreeSet<NodeId> = p.nodes.iter().copied().collect();
        let used: BTreeSet<&str> = p.nodes.iter().map(|id| dom[&id.0].as_str()).collect();
        if p.nodes.len() != r || nodes.len() != r || used.len() != r || p.degraded {
            return Err(format!("case {case}: n={n} domains={domains} r={r} picked {:?}", p.nodes));
        }
    }
    Ok(CONFIGS)
}

fn remap(n: u64, ks: &[ObjectUri]) -> Result<f64, String> {
    let before: Vec<u64> = (1..=n).collect();
    let ring = PlacementRing::build(before.iter().map(|i| NodeId(*i)), DEFAULT_VNODES);
    let (after, report) = ring_update(&ring, RingChange::Add(NodeId(n + 1)), ks);
    let mut with_new = before.clone();
    with_new.push(n + 1);
    let (va, vb) = (oracle_vnodes(&before), oracle_vnodes(&with_new));
    let mut moved = 0;
    for k in ks {
        let (a, b) = (oracle_primary(&va, k), oracle_primary(&vb, k));
        if ring.primary(k) != Some(NodeId(a)) || after.primary(k) != Some(NodeId(b)) {
            return Err(format!("{n}->{}: primary of {k} disagrees with the hash oracle", n + 1));
        }
        if a != b {
            if b != n + 1 {
                return Err(format!("{k} moved between old nodes"));
            }
            moved += 1;
        }
    }
    if moved != report.moved.len() {
        return Err(format!("{n}->{}: report says {} moved, oracle {moved}", n + 1, report.moved.len()));
    }
    let frac = report.fraction();
    let ideal = 1.0 / (n + 1) as f64;
    if frac > 2.0 * ideal {
        return Err(format!("{n}->{}: remapped {frac:.4}, limit {:.4}", n + 1, 2.0 * ideal));
    }
    Ok(frac / ideal)
}

fn balance(n: u64, ks: &[ObjectUri]) -> Result<f64, String> {
    let ring = PlacementRing::build((1..=n).map(NodeId), DEFAULT_VNODES);
    let counts = ownership_counts(&ring, ks);
    let mean = ks.len() as f64 / n as f64;
    let worst = counts.values().map(|c| (*c as f64 - mean).abs() / mean).fold(0.0, f64::max);
    if counts.len() as u64 != n || worst > 0.25 {
        return Err(format!("{n} nodes: worst deviation {:.1}% ({counts:?})", worst * 100.0));
    }
    Ok(worst)
}

pub fn run() -> Result<String, String> {
    let configs = distinctness()?;
    let ks = keys(REMAP_KEYS);
    let mut ratios = Vec::new();
    for n in [4, 8, 16] {
        ratios.push(format!("{n}->{}: {:.2}x ideal", n + 1, remap(n, &ks)?));
    }
    let b5 = balance(5, &ks[..10_000])?;
    let b8 = balance(8, &ks)?;
    Ok(format!(
        "{configs} configs domain-distinct; remap {}; balance worst {:.1}% (5 nodes), {:.1}% (8 nodes)",
        ratios.join(", "),
        b5 * 100.0,
        b8 * 100.0
    ))
}
