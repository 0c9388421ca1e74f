use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rdos_core::cluster::NodeId;
use rdos_core::model::MetadataPartition;
use rdos_core::sim::Fixture;
use rdos_core::storage::disk::sidecar_path;
use rdos_core::storage::{BlobSource, Disk, ReferenceDb, Store};

const OPS: usize = 10_000;

fn same_indexes(store: &Store, ns: &rdos_core::model::NamespaceId, before: &(Vec<String>, String)) -> Result<(), String> {
    let now = snapshot(store, ns);
    if &now != before {
        return Err("index or graph differ after rebuild".into());
    }
    Ok(())
}

fn snapshot(store: &Store, ns: &rdos_core::model::NamespaceId) -> (Vec<String>, String) {
    let idx = store.index_snapshot(ns).unwrap_or_default();
    let docs = idx.live().map(|u| format!("{u} {:?}", idx.doc(u))).collect();
    let graph = store.graph_snapshot(ns).map(|g| format!("{:?} {:?}", g.nodes(), g.edges())).unwrap_or_default();
    (docs, graph)
}

fn diff(a: &ReferenceDb, b: &ReferenceDb) -> String {
    for (u, e) in a.iter() {
        match b.get(u) {
            Some(o) if o == e => {}
            Some(o) => return format!("{u}: {e:?} vs {o:?}"),
            None => return format!("{u} missing"),
        }
    }
    format!("sizes {} vs {}", a.len(), b.len())
}

pub fn run() -> Result<String, String> {
    let f = Fixture::simple(8, 3, 3);
    let (ns, admin) = f.namespace("acme", "mixed");
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    let mut ok = 0usize;
    let mut down: Option<NodeId> = None;
    for i in 0..OPS {
        if i % 500 == 250 {
            let n = NodeId(rng.gen_range(1..=8));
            f.store.set_node_up(n, false);
            down = Some(n);
        } else if i % 500 == 400 {
            if let Some(n) = down.take() {
                f.store.set_node_up(n, true);
            }
        }
        let u = ns.uri(&format!("o/{:04}", rng.gen_range(0..400))).unwrap();
        let r = match rng.gen_range(0..100) {
            0..=39 => {
                let mut body = vec![0u8; rng.gen_range(1..200)];
                rng.fill(&mut body[..]);
                let parts = if rng.gen_bool(0.3) {
                    vec![MetadataPartition::new("init").with("k", rng.gen_range(0..9).to_string())]
                } else {
                    vec![]
                };
                f.store.put_object(&admin, &u, &BlobSource::bytes(&body), parts).map(|_| ())
            }
            40..=64 => {
                let p = MetadataPartition::new(format!("m{}", rng.gen_range(0..3))).with("v", rng.gen_range(0..50).to_string());
                f.store.put_annotation(&admin, &u, p).map(|_| ())
            }
            65..=72 => f.store.delete_annotation(&admin, &u, &format!("m{}", rng.gen_range(0..3))).map(|_| ()),
            73..=82 => f.store.delete_object(&admin, &u).map(|_| ()),
            _ => {
                let to = ns.uri(&format!("o/{:04}", rng.gen_range(0..400))).unwrap();
                let w = rng.gen_range(0..=10) as f64 / 10.0;
                f.store.put_relation(&admin, &u, &to, "RelTo", w).map(|_| ())
            }
        };
        ok += r.is_ok() as usize;
    }
    if let Some(n) = down {
        f.store.set_node_up(n, true);
    }

    let live = f.store.refdb();
    let (scanned, report) = f.store.scavenge_snapshot();
    if !report.corrupt.is_empty() || !report.orphaned.is_empty() {
        return Err(format!("clean scan reported {} corrupt, {} orphaned", report.corrupt.len(), report.orphaned.len()));
    }
    if scanned != live {
        return Err(format!("scavenged db differs: {}", diff(&live, &scanned)));
    }
    let derived = snapshot(&f.store, &ns);
    f.store.rebuild();
    if f.store.refdb() != live {
        return Err(format!("rebuilt db differs: {}", diff(&live, &f.store.refdb())));
    }
    same_indexes(&f.store, &ns, &derived)?;

    // damage one replica's sidecar of one live object
    let (victim, entry) = live.iter().filter(|(_, e)| e.is_live()).nth(live.len() / 3).ok_or("no live objects")?;
    let version = entry.latest;
    let node = *entry.versions[&version].replicas.iter().next().unwrap();
    let path = sidecar_path(victim.tenant(), victim.namespace(), victim.hash64(), version.0);
    let disk = &f.disks[&node];
    let bytes = disk.read(&path).map_err(|e| e.to_string())?;
    disk.write(&path, &bytes[..bytes.len() / 2]).map_err(|e| e.to_string())?;
    let report = f.store.rebuild();
    if report.corrupt.len() != 1 || report.corrupt[0].node != node || report.corrupt[0].path != path {
        return Err(format!("expected exactly {path} on {node:?} flagged, got {:?}", report.corrupt));
    }
    let rebuilt = f.store.refdb();
    for (u, e) in live.iter() {
        let got = rebuilt.get(u).ok_or_else(|| format!("{u} lost"))?;
        if u == victim {
            let mut expect = e.clone();
            expect.versions.get_mut(&version).unwrap().replicas.remove(&node);
            if got != &expect {
                return Err(format!("{u}: only the damaged replica should drop out"));
            }
        } else if got != e {
            return Err(format!("{u} changed though its sidecars are intact"));
        }
    }
    Ok(format!(
        "{OPS} ops ({ok} succeeded), {} entries rebuilt field-for-field; corrupted sidecar flagged alone",
        live.len()
    ))
}
