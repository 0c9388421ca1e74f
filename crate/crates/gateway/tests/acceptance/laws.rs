use std::collections::BTreeMap;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rdos_core::model::{MetadataPartition, NamespaceId, ObjectRecord};
use rdos_core::pipeline::fold_trace;
use rdos_core::sim::{corpus, Fixture};
use rdos_core::storage::{AdminRecord, BlobSource, Store};
use rdos_core::tenancy::{AdminOp, Principal};

const SEEDS: u64 = 120;
const DOCS: usize = 24;

const SALES_DICT: &str = r#"{"format_version":1,"id":"tags","apply_rules":[
  {"id":"sales","selector":{"query":"Department=Sales"},"emit":[{"key":"cost_center","value":"S1"}]},
  {"id":"trips","selector":{"uri_glob":"*/trips/*"},"emit":[{"key":"kind","value":"trip"}]}]}"#;

const LAYERED: &str = r#"{"format_version":1,"id":"layered","stages":[
  {"id":"x","kind":"EXTRACT","dictionary":"travel","target_partition":"extracted"},
  {"id":"a","kind":"APPLY","dictionary":"tags","target_partition":"applied"}]}"#;

const EMPTY: &str = r#"{"format_version":1,"id":"empty","stages":[]}"#;

type Map = BTreeMap<String, String>;

struct Doc {
    path: String,
    body: Vec<u8>,
    initial: Vec<MetadataPartition>,
    /// Pairs written into the content, keyed by canonical key.
    fields: Map,
}

fn gen_doc(rng: &mut ChaCha8Rng, i: usize) -> Doc {
    let dir = *["trips", "notes", "misc"].choose(rng).unwrap();
    let path = format!("{dir}/{i:03}.txt");
    if rng.gen_bool(0.15) {
        let mut body = vec![0u8; 32];
        rng.fill(&mut body[..]);
        body[3] = 0;
        return Doc { path, body, initial: vec![], fields: Map::new() };
    }
    let mut lines = vec![format!("memo {i}")];
    let mut fields = Map::new();
    let choices: [(&str, &[&str], &[&str]); 4] = [
        ("Year", &["Year"], &["2011", "2012", "2013"]),
        ("Department", &["Department", "Dept"], &["Sales", "Legal", "Ops"]),
        ("Territory", &["Territory"], &["US", "EU", "APAC"]),
        ("Status", &["Status"], &["Approved", "Pending"]),
    ];
    for (key, spellings, values) in choices {
        if rng.gen_bool(0.6) {
            let v = *values.choose(rng).unwrap();
            let sep = if rng.gen_bool(0.5) { ":" } else { "=" };
            lines.push(format!("{} {sep} {v}", spellings.choose(rng).unwrap()));
            fields.insert(key.to_string(), v.to_string());
        }
        if rng.gen_bool(0.3) {
            lines.push(format!("filler words about {}", values.choose(rng).unwrap()));
        }
    }
    lines.shuffle(rng);
    let initial = if rng.gen_bool(0.3) { vec![MetadataPartition::new("user").with("owner", "ann")] } else { vec![] };
    Doc { path, body: lines.join("\n").into_bytes(), initial, fields }
}

/// Expected stage outputs, folded in order: extraction sees content, the
/// apply stage sees everything written before it.
fn oracle(doc: &Doc, ns: &str) -> (Map, Map) {
    let extracted = doc.fields.clone();
    let mut applied = Map::new();
    if extracted.get("Department").map(String::as_str) == Some("Sales") {
        applied.insert("cost_center".into(), "S1".into());
    }
    if format!("{ns}/{}", doc.path).split('/').nth(1) == Some("trips") {
        applied.insert("kind".into(), "trip".into());
    }
    (extracted, applied)
}

fn publish(store: &Store, admin: &Principal) -> Result<(), String> {
    for d in [corpus::TRAVEL_DICT, SALES_DICT] {
        store.admin(admin, AdminRecord::PublishDictionary { doc: corpus::dictionary(d) }).map_err(|e| e.to_string())?;
    }
    for p in [LAYERED, EMPTY] {
        store.admin(admin, AdminRecord::PublishPipeline { doc: corpus::pipeline(p) }).map_err(|e| e.to_string())?;
    }
    Ok(())
}

fn attach(store: &Store, admin: &Principal, ns: &NamespaceId, p: &str) -> Result<(), String> {
    store
        .admin(admin, AdminRecord::Tenancy { op: AdminOp::SetPipeline { ns: ns.clone(), pipeline: Some(p.into()) } })
        .map(|_| ())
        .map_err(|e| e.to_string())
}

fn partitions(r: &ObjectRecord) -> BTreeMap<String, Map> {
    r.partitions.iter().map(|(n, p)| (n.clone(), p.pairs.clone())).collect()
}

fn one_seed(seed: u64) -> Result<(usize, usize), String> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let f = Fixture::simple(3, 3, 2);
    let (ident, admin) = f.namespace("acme", "ident");
    let (layered, _) = f.namespace("acme", "layered");
    let (late, _) = f.namespace("acme", "late");
    publish(&f.store, &admin)?;
    attach(&f.store, &admin, &ident, "empty")?;
    attach(&f.store, &admin, &layered, "layered")?;
    let docs: Vec<Doc> = (0..DOCS).map(|i| gen_doc(&mut rng, i)).collect();
    let mut identity_stages = 0;
    for d in &docs {
        let src = BlobSource::bytes(&d.body);
        // identity: the empty pipeline leaves the object as written
        let u = ident.uri(&d.path).unwrap();
        let (_, run) = f.store.put_object_with_pipeline(&admin, &u, &src, d.initial.clone()).map_err(|e| e.to_string())?;
        let rec = f.store.head_object(&admin, &u, None).map_err(|e| e.to_string())?;
        let want: BTreeMap<String, Map> = d.initial.iter().map(|p| (p.name.clone(), p.pairs.clone())).collect();
        if partitions(&rec) != want || !run.is_some_and(|r| r.trace.is_empty() && r.failed.is_none()) {
            return Err(format!("seed {seed} {}: empty pipeline changed the object", d.path));
        }

        // fold: persisted partitions equal the folded stage trace and the oracle
        let u = layered.uri(&d.path).unwrap();
        let (_, run) = f.store.put_object_with_pipeline(&admin, &u, &src, d.initial.clone()).map_err(|e| e.to_string())?;
        let run = run.ok_or("layered pipeline did not run")?;
        identity_stages += run.trace.iter().filter(|t| t.identity).count();
        let rec = f.store.head_object(&admin, &u, None).map_err(|e| e.to_string())?;
        let (ex, ap) = oracle(d, "layered");
        let mut want: BTreeMap<String, Map> = d.initial.iter().map(|p| (p.name.clone(), p.pairs.clone())).collect();
        for (name, pairs) in [("extracted", &ex), ("applied", &ap)] {
            if !pairs.is_empty() {
                want.insert(name.into(), pairs.clone());
            }
        }
        let got = partitions(&rec);
        if got != want {
            return Err(format!("seed {seed} {}: got {got:?}, oracle {want:?}", d.path));
        }
        for (name, folded) in fold_trace(&run.trace) {
            if folded.map(|p| p.pairs) != got.get(&name).cloned() {
                return Err(format!("seed {seed} {}: fold of {name} disagrees with the record", d.path));
            }
        }

        let u = late.uri(&d.path).unwrap();
        f.store.put_object(&admin, &u, &src, d.initial.clone()).map_err(|e| e.to_string())?;
    }

    // backfill: converges to the ingest result, then is idempotent
    attach(&f.store, &admin, &late, "layered")?;
    let first = f.store.backfill(&admin, &late, None, None, None).map_err(|e| e.to_string())?;
    let after_first = f.store.refdb();
    let second = f.store.backfill(&admin, &late, None, None, None).map_err(|e| e.to_string())?;
    if (second.annotations_written, second.edges_written) != (0, 0) || f.store.refdb() != after_first {
        return Err(format!("seed {seed}: second backfill wrote {second:?}"));
    }
    for d in &docs {
        let a = f.store.head_object(&admin, &late.uri(&d.path).unwrap(), None).map_err(|e| e.to_string())?;
        let b = f.store.head_object(&admin, &layered.uri(&d.path).unwrap(), None).map_err(|e| e.to_string())?;
        if partitions(&a) != partitions(&b) {
            return Err(format!("seed {seed} {}: backfill and ingest disagree", d.path));
        }
    }
    Ok((first.annotations_written, identity_stages))
}

pub fn run() -> Result<String, String> {
    let (mut written, mut identity) = (0, 0);
    for seed in 0..SEEDS {
        let (w, i) = one_seed(seed)?;
        written += w;
        identity += i;
    }
    Ok(format!(
        "{SEEDS} seeds x {DOCS} docs: identity, fold equality and backfill idempotence hold ({written} backfilled annotations, {identity} identity stages)"
    ))
}
