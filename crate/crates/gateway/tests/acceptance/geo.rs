use std::collections::BTreeMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rdos_core::sim::{check_invariants, Check, Scenario, World};
use rdos_core::storage::Store;
use serde_json::json;
use sha2::{Digest, Sha256};

const SEEDS: u64 = 50;

type Live = BTreeMap<String, (String, BTreeMap<String, BTreeMap<String, String>>, Vec<(String, String, u64)>)>;

fn live(store: &Store) -> Live {
    let db = store.refdb();
    db.iter()
        .filter(|(_, e)| e.is_live())
        .map(|(u, e)| {
            let r = &e.record;
            let parts = r.partitions.iter().map(|(n, p)| (n.clone(), p.pairs.clone())).collect();
            let mut rels: Vec<_> =
                r.relations.iter().map(|t| (t.label.clone(), t.target.to_string(), t.weight.to_bits())).collect();
            rels.sort();
            (u.as_str().to_string(), (r.system.content_digest.clone(), parts, rels))
        })
        .collect()
}

fn scenario(seed: u64) -> Scenario {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let ops1 = rng.gen_range(10..50);
    let ops2 = rng.gen_range(10..50);
    let paths = rng.gen_range(3..12);
    let doc = json!({
        "name": "geo-heal",
        "clusters": 2,
        "nodes": 4,
        "script": [
            {"event": "put", "cluster": 1, "path": "shared.txt", "body": "v1"},
            {"event": "tick", "n": 2},
            {"event": "cut_geo"},
            {"event": "put", "cluster": 1, "path": "shared.txt", "body": "from-1"},
            {"event": "put", "cluster": 2, "path": "shared.txt", "body": "from-2"},
            {"event": "annotate", "cluster": 1, "path": "shared.txt", "partition": "p", "pairs": {"k": "1"}},
            {"event": "annotate", "cluster": 2, "path": "shared.txt", "partition": "p", "pairs": {"k": "2"}},
            {"event": "workload", "cluster": 1, "ops": ops1, "paths": paths},
            {"event": "workload", "cluster": 2, "ops": ops2, "paths": paths},
            {"event": "tick", "n": rng.gen_range(0..4)},
            {"event": "heal_geo"},
            {"event": "tick", "n": 3}
        ],
        "checks": ["geo_convergence"]
    });
    Scenario::parse(doc.to_string().as_bytes()).expect("scenario")
}

pub fn run() -> Result<String, String> {
    let bodies = ["from-1", "from-2"].map(|b| hex::encode(Sha256::digest(b.as_bytes())));
    let mut objects = 0;
    for seed in 0..SEEDS {
        let (trace, world) = World::new(scenario(seed), seed).and_then(|w| w.run()).map_err(|e| e.to_string())?;
        let v = check_invariants(&trace, &[Check::GeoConvergence]);
        if !v.is_empty() {
            return Err(format!("seed {seed}: {v:?}"));
        }
        let (a, b) = (live(world.store(1)), live(world.store(2)));
        if a != b {
            let diff: Vec<_> = a.keys().chain(b.keys()).filter(|k| a.get(*k) != b.get(*k)).take(3).collect();
            return Err(format!("seed {seed}: clusters differ on {diff:?}"));
        }
        let (uri, (digest, parts, _)) =
            a.iter().find(|(u, _)| u.ends_with("/shared.txt")).ok_or(format!("seed {seed}: shared.txt lost"))?;
        if !bodies.contains(digest) {
            return Err(format!("seed {seed}: {uri} holds neither concurrent write"));
        }
        match parts.get("p").and_then(|p| p.get("k")).map(String::as_str) {
            Some("1") | Some("2") => {}
            other => return Err(format!("seed {seed}: p.k = {other:?}")),
        }
        objects += a.len();
    }
    Ok(format!("{SEEDS} partition-then-heal runs identical across clusters ({objects} live objects compared)"))
}
