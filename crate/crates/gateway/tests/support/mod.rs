//! End-to-end HTTP conformance checks shared by the http and acceptance
//! targets. Each check returns `Err(description)` on the first mismatch.

#![allow(dead_code)]

use std::collections::BTreeSet;
use std::io::Read;
use std::path::PathBuf;
use std::sync::Arc;

use rand::RngCore;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rdos_core::cluster::NodeId;
use rdos_core::sim::corpus;
use rdos_core::storage::disk::blob_path;
use rdos_core::storage::{FsDisk, Store, StoreConfig, SystemClock};
use rdos_core::tenancy::{Principal, Role};
use rdos_gateway::{spawn, AppState, ServerHandle};
use reqwest::blocking::{Body, Client as Http};
use reqwest::Method;
use serde_json::{json, Value};
use sha2::{Digest, Sha256};

pub const ROOT: &str = "root-secret";
pub const ADMIN: &str = "acme-secret";
pub const BOB: &str = "bob-secret";

macro_rules! ensure {
    ($cond:expr, $($fmt:tt)+) => {
        if !$cond {
            return Err(format!($($fmt)+));
        }
    };
}

pub struct Reply {
    pub status: u16,
    pub headers: reqwest::header::HeaderMap,
    pub bytes: Vec<u8>,
}

impl Reply {
    pub fn json(&self) -> Value {
        serde_json::from_slice(&self.bytes).unwrap_or(Value::Null)
    }

    pub fn code(&self) -> String {
        self.json()["error"]["code"].as_str().unwrap_or("").to_string()
    }

    pub fn header(&self, name: &str) -> Option<String> {
        self.headers.get(name).and_then(|v| v.to_str().ok()).map(str::to_string)
    }
}

pub struct Env {
    pub dir: tempfile::TempDir,
    pub store: Arc<Store>,
    pub server: ServerHandle,
    pub http: Http,
    pub roots: Vec<PathBuf>,
}

pub struct Shape {
    pub nodes: usize,
    pub domains: usize,
    pub replicas: usize,
    pub max_blob: u64,
}

impl Default for Shape {
    fn default() -> Self {
        Self { nodes: 5, domains: 3, replicas: 3, max_blob: rdos_core::storage::DEFAULT_MAX_BLOB }
    }
}

impl Env {
    pub fn new(shape: Shape) -> Env {
        let dir = tempfile::tempdir().expect("tempdir");
        let cfg = StoreConfig { replicas: shape.replicas, max_blob: shape.max_blob, ..Default::default() };
        let store = Arc::new(Store::new(cfg, Arc::new(SystemClock)));
        let mut roots = Vec::new();
        for i in 1..=shape.nodes as u64 {
            let root = dir.path().join(format!("n{i}"));
            let disk = FsDisk::open(&root).expect("node dir");
            store.add_node(NodeId(i), &format!("d{}", (i - 1) % shape.domains as u64), Arc::new(disk));
            roots.push(root);
        }
        store.bootstrap_principal(Principal::new("root", Role::SystemAdmin, ROOT)).expect("bootstrap");
        let spool = dir.path().join("spool");
        std::fs::create_dir_all(&spool).expect("spool");
        let state = AppState { store: store.clone(), spool };
        let server = spawn(state).expect("server");
        let http = Http::builder().timeout(None).build().expect("client");
        let env = Env { dir, store, server, http, roots };
        env.provision();
        env
    }

    fn provision(&self) {
        let steps: Vec<(&str, &str, Value)> = vec![
            (ROOT, "tenants", json!({"tenant": "acme"})),
            (ROOT, "principals", json!({"account": "acme-admin", "role": {"kind": "TENANT_ADMIN", "tenant": "acme"}, "token": ADMIN})),
            (ADMIN, "namespaces", json!({"tenant": "acme", "namespace": "claims"})),
            (ADMIN, "namespaces", json!({"tenant": "acme", "namespace": "secret"})),
            (ADMIN, "principals", json!({"account": "bob", "role": {"kind": "USER", "tenant": "acme"}, "token": BOB})),
            (ADMIN, "grants", json!({"account": "bob", "tenant": "acme", "namespace": "claims",
                                      "grants": ["READ", "WRITE", "ANNOTATE", "QUERY"]})),
        ];
        for (token, op, body) in steps {
            let r = self.call(Method::POST, &format!("/v1/admin/{op}"), Some(token), Some(body));
            assert_eq!(r.status, 201, "provision {op}: {:?}", r.json());
        }
    }

    pub fn url(&self, path: &str) -> String {
        format!("{}{path}", self.server.url())
    }

    pub fn send(&self, req: reqwest::blocking::RequestBuilder) -> Reply {
        let resp = req.send().expect("request");
        let status = resp.status().as_u16();
        let headers = resp.headers().clone();
        let bytes = resp.bytes().expect("body").to_vec();
        Reply { status, headers, bytes }
    }

    pub fn call(&self, method: Method, path: &str, token: Option<&str>, body: Option<Value>) -> Reply {
        let mut req = self.http.request(method, self.url(path));
        if let Some(t) = token {
            req = req.bearer_auth(t);
        }
        if let Some(b) = body {
            req = req.json(&b);
        }
        self.send(req)
    }

    pub fn raw(&self, method: Method, path: &str, token: &str, body: Vec<u8>) -> Reply {
        self.send(self.http.request(method, self.url(path)).bearer_auth(token).body(body))
    }

    pub fn put(&self, ns: &str, path: &str, token: &str, body: impl Into<Body>, meta: &[(&str, &str)]) -> Reply {
        let mut req = self.http.put(self.url(&format!("/v1/acme/{ns}/objects/{path}"))).bearer_auth(token).body(body);
        for (p, kv) in meta {
            req = req.header(format!("x-rdos-meta-{p}"), *kv);
        }
        self.send(req)
    }

    pub fn get(&self, ns: &str, path: &str, token: &str) -> Reply {
        self.call(Method::GET, &format!("/v1/acme/{ns}/objects/{path}"), Some(token), None)
    }

    pub fn post(&self, path: &str, token: &str, body: Value) -> Reply {
        self.call(Method::POST, path, Some(token), Some(body))
    }
}

fn expect_status(r: &Reply, status: u16, what: &str) -> Result<(), String> {
    ensure!(r.status == status, "{what}: expected {status}, got {} {}", r.status, String::from_utf8_lossy(&r.bytes));
    Ok(())
}

// ---- checks ----

pub fn object_roundtrip(env: &Env) -> Result<(), String> {
    let body = b"hello, object store\x00\xff".to_vec();
    let r = env.put("claims", "docs/a.bin", BOB, body.clone(), &[("origin", "source=scanner;batch=7")]);
    expect_status(&r, 201, "put")?;
    ensure!(r.json()["version"] == json!(1), "put version {:?}", r.json());
    ensure!(r.header("x-rdos-version").as_deref() == Some("1"), "version header");
    let digest = hex::encode(Sha256::digest(&body));
    ensure!(r.json()["digest"] == json!(digest), "digest");

    let g = env.get("claims", "docs/a.bin", BOB);
    expect_status(&g, 200, "get")?;
    ensure!(g.bytes == body, "bytes differ");
    ensure!(g.header("x-rdos-digest").as_deref() == Some(digest.as_str()), "digest header");
    ensure!(g.header("x-rdos-meta-origin").as_deref() == Some("batch=7;source=scanner"), "meta header {:?}", g.header("x-rdos-meta-origin"));

    let h = env.send(env.http.head(env.url("/v1/acme/claims/objects/docs/a.bin")).bearer_auth(BOB));
    expect_status(&h, 200, "head")?;
    ensure!(h.header("content-length").as_deref() == Some(&*body.len().to_string()), "head length");
    ensure!(h.bytes.is_empty(), "head has a body");

    let m = env.call(Method::GET, "/v1/acme/claims/objects/docs/a.bin/meta/origin", Some(BOB), None);
    expect_status(&m, 200, "meta from header")?;
    ensure!(m.json()["pairs"] == json!({"batch": "7", "source": "scanner"}), "header partition {:?}", m.json());

    let r2 = env.put("claims", "docs/a.bin", BOB, b"second".to_vec(), &[]);
    expect_status(&r2, 201, "overwrite")?;
    ensure!(r2.json()["version"] == json!(2), "new version");
    let old = env.call(Method::GET, "/v1/acme/claims/objects/docs/a.bin?version=1", Some(BOB), None);
    expect_status(&old, 200, "get v1")?;
    ensure!(old.bytes == body, "v1 bytes");
    Ok(())
}

pub fn versions_and_tombstones(env: &Env) -> Result<(), String> {
    expect_status(&env.put("claims", "t/x.txt", BOB, "one", &[]), 201, "put 1")?;
    expect_status(&env.put("claims", "t/x.txt", BOB, "two", &[]), 201, "put 2")?;
    let d = env.call(Method::DELETE, "/v1/acme/claims/objects/t/x.txt", Some(BOB), None);
    expect_status(&d, 200, "delete")?;
    ensure!(d.json()["version"] == json!(3), "tombstone version {:?}", d.json());
    let g = env.get("claims", "t/x.txt", BOB);
    expect_status(&g, 410, "get tombstoned")?;
    ensure!(g.code() == "GONE", "code {}", g.code());
    let v = env.call(Method::GET, "/v1/acme/claims/objects/t/x.txt/versions", Some(BOB), None);
    expect_status(&v, 200, "versions")?;
    let list = v.json()["versions"].as_array().cloned().unwrap_or_default();
    ensure!(list.len() == 3, "three versions, got {}", list.len());
    ensure!(list[2]["tombstone"] == json!(true), "latest is tombstone");
    let old = env.call(Method::GET, "/v1/acme/claims/objects/t/x.txt?version=2", Some(BOB), None);
    expect_status(&old, 200, "old version readable")?;
    ensure!(old.bytes == b"two", "old bytes");
    expect_status(&env.put("claims", "t/x.txt", BOB, "three", &[]), 201, "recreate")?;
    Ok(())
}

pub fn annotations(env: &Env) -> Result<(), String> {
    expect_status(&env.put("claims", "photos/p.jpg", BOB, corpus::PHOTO.to_vec(), &[]), 201, "put")?;
    let base = "/v1/acme/claims/objects/photos/p.jpg/meta/claim";
    let p = env.call(Method::PUT, base, Some(BOB), Some(json!({"CID": "1234"})));
    expect_status(&p, 200, "put meta")?;
    ensure!(p.json()["version"] == json!(1), "annotation response carries version");
    let p = env.call(Method::PUT, base, Some(BOB), Some(json!({"CID": "1234", "Status": "Open"})));
    expect_status(&p, 200, "replace meta")?;
    let g = env.call(Method::GET, base, Some(BOB), None);
    ensure!(g.json()["pairs"] == json!({"CID": "1234", "Status": "Open"}), "replaced {:?}", g.json());
    let p = env.call(Method::PUT, base, Some(BOB), Some(json!({"CID": "1234"})));
    expect_status(&p, 200, "shrink meta")?;
    let g = env.call(Method::GET, base, Some(BOB), None);
    ensure!(g.json()["pairs"] == json!({"CID": "1234"}), "partition-atomic replace {:?}", g.json());
    let d = env.call(Method::DELETE, base, Some(BOB), None);
    expect_status(&d, 200, "delete meta")?;
    let g = env.call(Method::GET, base, Some(BOB), None);
    expect_status(&g, 404, "deleted partition")?;
    ensure!(g.code() == "PARTITION_NOT_FOUND", "code {}", g.code());
    Ok(())
}

pub fn install_insurance(env: &Env, ns: &str) -> Result<(), String> {
    for (kind, doc) in
        [("dictionaries", corpus::CLAIMS_DICT), ("dictionaries", corpus::DOCTYPE_DICT), ("pipelines", corpus::INSURANCE_PIPELINE)]
    {
        let r = env.raw(Method::POST, &format!("/v1/admin/{kind}"), ADMIN, doc.as_bytes().to_vec());
        expect_status(&r, 201, kind)?;
        ensure!(r.json()["version"] == json!(1), "{kind} version {:?}", r.json());
    }
    let r = env.post("/v1/admin/namespace-pipeline", ADMIN, json!({"tenant": "acme", "namespace": ns, "pipeline": "insurance"}));
    expect_status(&r, 201, "attach pipeline")
}

pub fn insurance_query_and_graph(env: &Env) -> Result<(), String> {
    let ns = "claims";
    install_insurance(env, ns)?;
    expect_status(&env.put(ns, "photos/img1.jpg", BOB, corpus::PHOTO.to_vec(), &[("claim", "CID=1234")]), 201, "photo 1")?;
    expect_status(&env.put(ns, "photos/img2.jpg", BOB, corpus::PHOTO.to_vec(), &[("claim", "CID=1234")]), 201, "photo 2")?;
    expect_status(&env.put(ns, "reports/police-1234.txt", BOB, corpus::POLICE_REPORT, &[]), 201, "police report")?;
    expect_status(&env.put(ns, "reports/other.txt", BOB, "ClaimID: 9999\n", &[]), 201, "distractor")?;
    let f = env.put(ns, "forms/1234.txt", BOB, corpus::CLAIM_FORM, &[]);
    expect_status(&f, 201, "form")?;
    ensure!(f.json()["pipeline"]["failed"].is_null(), "ingest pipeline failed: {:?}", f.json());

    let b = env.post("/v1/acme/claims/pipeline/backfill", BOB, json!({}));
    expect_status(&b, 200, "backfill")?;
    ensure!(b.json()["cursor"].is_null(), "backfill covered namespace");
    let again = env.post("/v1/acme/claims/pipeline/backfill", BOB, json!({}));
    ensure!(again.json()["edges_written"] == json!(0), "backfill idempotent {:?}", again.json());

    let q = env.post("/v1/acme/claims/query", BOB, json!({"query": "CID=1234"}));
    expect_status(&q, 200, "query")?;
    let got: BTreeSet<String> =
        q.json()["hits"].as_array().unwrap_or(&vec![]).iter().filter_map(|h| h["uri"].as_str().map(str::to_string)).collect();
    let want: BTreeSet<String> = ["forms/1234.txt", "photos/img1.jpg", "photos/img2.jpg", "reports/police-1234.txt"]
        .iter()
        .map(|p| format!("rdos://acme/claims/{p}"))
        .collect();
    ensure!(got == want, "CID=1234 hits {got:?}");
    let page = env.post("/v1/acme/claims/query", BOB, json!({"query": "CID=1234", "offset": 1, "limit": 2}));
    ensure!(page.json()["total"] == json!(4) && page.json()["hits"].as_array().map(Vec::len) == Some(2), "paging");

    let form = "rdos://acme/claims/forms/1234.txt";
    for src in ["photos/img1.jpg", "photos/img2.jpg", "reports/police-1234.txt"] {
        let n = env.post("/v1/acme/claims/graph/neighbors", BOB, json!({"node": src, "direction": "OUT", "label": "RelTo"}));
        expect_status(&n, 200, "neighbors")?;
        ensure!(n.json()["edges"].as_array().map(Vec::len) == Some(1), "{src} edges {:?}", n.json());
        ensure!(n.json()["edges"][0]["to"] == json!(form), "{src} points at {:?}", n.json()["edges"][0]["to"]);
    }
    let inbound = env.post("/v1/acme/claims/graph/neighbors", BOB, json!({"node": form, "direction": "IN"}));
    ensure!(inbound.json()["edges"].as_array().map(Vec::len) == Some(3), "form inbound {:?}", inbound.json());

    let t = env.post("/v1/acme/claims/graph/traverse", BOB, json!({"start": form, "max_depth": 1, "direction": "IN"}));
    expect_status(&t, 200, "traverse")?;
    ensure!(t.json()["reached"].as_array().map(Vec::len) == Some(3), "traverse {:?}", t.json());

    let pr = env.post("/v1/acme/claims/graph/pagerank", BOB, json!({}));
    expect_status(&pr, 200, "pagerank")?;
    let sum: f64 = pr.json()["scores"].as_object().map(|m| m.values().filter_map(Value::as_f64).sum()).unwrap_or(0.0);
    ensure!((sum - 1.0).abs() < 1e-9, "pagerank sum {sum}");
    let top = pr.json()["scores"][form].as_f64().unwrap_or(0.0);
    ensure!(pr.json()["scores"].as_object().unwrap().values().all(|v| v.as_f64().unwrap() <= top), "form is most central");

    let cq = env.post(
        "/v1/acme/claims/graph/class-query",
        BOB,
        json!({"node": "doc_type=damage_photo", "constraints": [{"direction": "OUT", "label": "RelTo", "target": "doc_type=claim_form"}]}),
    );
    expect_status(&cq, 200, "class-query")?;
    ensure!(
        cq.json()["uris"] == json!(["rdos://acme/claims/photos/img1.jpg", "rdos://acme/claims/photos/img2.jpg"]),
        "class query {:?}",
        cq.json()
    );

    let e = env.post(
        "/v1/acme/claims/graph/edges",
        BOB,
        json!({"from": "reports/other.txt", "to": "photos/img1.jpg", "label": "SeeAlso", "weight": 0.5}),
    );
    expect_status(&e, 200, "edges")?;
    ensure!(e.json()["version"] == json!(1), "edge response carries version");
    let n = env.post("/v1/acme/claims/graph/neighbors", BOB, json!({"node": "reports/other.txt", "label": "SeeAlso"}));
    ensure!(n.json()["edges"][0]["weight"] == json!(0.5), "edge weight {:?}", n.json());

    let run = env.post("/v1/acme/claims/pipeline/run", BOB, json!({"path": "forms/1234.txt"}));
    expect_status(&run, 200, "run pipeline")?;
    ensure!(run.json()["stages"].as_array().map(Vec::len) == Some(3), "three stages");
    Ok(())
}

pub fn admin_endpoints(env: &Env) -> Result<(), String> {
    let n = env.call(Method::GET, "/v1/admin/nodes", Some(ROOT), None);
    expect_status(&n, 200, "nodes")?;
    ensure!(n.json()["nodes"].as_array().map(Vec::len) == Some(env.roots.len()), "node list");
    expect_status(&env.post("/v1/admin/repair", ROOT, json!({})), 200, "repair")?;
    let rb = env.post("/v1/admin/rebuild", ROOT, json!({}));
    expect_status(&rb, 200, "rebuild")?;
    ensure!(rb.json()["corrupt"] == json!([]), "rebuild found corruption {:?}", rb.json()["corrupt"]);
    expect_status(&env.post("/v1/admin/gc", ROOT, json!({})), 200, "gc")?;
    expect_status(&env.post("/v1/admin/repair", ADMIN, json!({})), 403, "tenant admin repair")?;
    let ns = env.post("/v1/admin/namespaces", ADMIN, json!({"tenant": "acme", "namespace": "archive", "versioning": false, "quota": 10}));
    expect_status(&ns, 201, "create namespace")?;
    ensure!(ns.json()["quota"] == json!(10), "namespace config echoed");
    expect_status(&env.post("/v1/admin/namespace-pipeline", ADMIN, json!({"tenant": "acme", "namespace": "archive", "pipeline": null})), 201, "detach")?;
    Ok(())
}

/// Codes that cannot be provoked through a healthy single-cluster gateway.
/// Placement shortfalls surface as INSUFFICIENT_REPLICAS on the write path.
pub const UNREACHABLE: &[&str] =
    &["MALFORMED_SIDECAR", "REMOTE_UNAVAILABLE", "SCENARIO_ERROR", "IO_ERROR", "INSUFFICIENT_NODES"];

/// Provoke every other error code and check its status. Returns the codes seen.
pub fn error_codes(env: &Env) -> Result<BTreeSet<String>, String> {
    let mut seen = BTreeSet::new();
    let mut check = |r: Reply, status: u16, code: &str| -> Result<(), String> {
        ensure!(r.status == status && r.code() == code, "expected {status} {code}, got {} {}", r.status, String::from_utf8_lossy(&r.bytes));
        ensure!(r.json()["error"]["message"].as_str().is_some_and(|m| !m.is_empty()), "{code} has no message");
        seen.insert(code.to_string());
        Ok(())
    };
    let obj = |p: &str| format!("/v1/acme/claims/objects/{p}");
    expect_status(&env.put("claims", "e/present.txt", BOB, "x", &[]), 201, "seed")?;
    expect_status(&env.put("claims", "e/other.txt", BOB, "o", &[]), 201, "seed")?;

    // 401 / 403
    check(env.call(Method::GET, &obj("e/present.txt"), None, None), 401, "UNAUTHENTICATED")?;
    check(env.call(Method::GET, &obj("e/present.txt"), Some("nope"), None), 401, "UNAUTHENTICATED")?;
    check(env.get("claims", "e/present.txt", ROOT), 403, "UNAUTHORIZED")?;
    check(env.get("secret", "e/present.txt", BOB), 403, "UNAUTHORIZED")?;
    check(env.post("/v1/admin/tenants", ADMIN, json!({"tenant": "evil"})), 403, "UNAUTHORIZED")?;

    // 404
    check(env.get("claims", "e/missing.txt", BOB), 404, "NOT_FOUND")?;
    check(env.call(Method::GET, "/v1/acme/nowhere/objects/x", Some(ADMIN), None), 404, "UNKNOWN_NAMESPACE")?;
    check(env.call(Method::GET, &obj("e/present.txt/meta/none"), Some(BOB), None), 404, "PARTITION_NOT_FOUND")?;
    check(env.post("/v1/admin/bogus", ROOT, json!({})), 404, "NOT_FOUND")?;

    // 409
    check(env.post("/v1/admin/tenants", ROOT, json!({"tenant": "acme"})), 409, "DUPLICATE_ID")?;
    expect_status(&env.post("/v1/admin/namespaces", ADMIN, json!({"tenant": "acme", "namespace": "flat", "versioning": false})), 201, "flat")?;
    expect_status(&env.put("flat", "a.txt", ADMIN, "1", &[]), 201, "flat put")?;
    check(env.put("flat", "a.txt", ADMIN, "2", &[]), 409, "VERSIONING_DISABLED")?;

    // 410
    expect_status(&env.call(Method::DELETE, &obj("e/gone.txt"), Some(BOB), None), 404, "delete missing")?;
    expect_status(&env.put("claims", "e/gone.txt", BOB, "x", &[]), 201, "gone seed")?;
    expect_status(&env.call(Method::DELETE, &obj("e/gone.txt"), Some(BOB), None), 200, "delete")?;
    check(env.get("claims", "e/gone.txt", BOB), 410, "GONE")?;

    // 400
    check(env.call(Method::GET, "/v1/Bad%20Tenant/claims/objects/x", Some(BOB), None), 400, "INVALID_NAME")?;
    check(env.put("claims", "e/%00bad", BOB, "x", &[]), 400, "INVALID_PATH")?;
    check(env.put("claims", "e/p.txt", BOB, "x", &[("bad", "=novalue")]), 400, "INVALID_PARTITION")?;
    check(env.post("/v1/acme/claims/query", BOB, json!({"query": "CID="})), 400, "PARSE_ERROR")?;
    check(env.raw(Method::POST, "/v1/acme/claims/query", BOB, b"{not json".to_vec()), 400, "BAD_REQUEST")?;
    check(env.raw(Method::POST, "/v1/admin/dictionaries", ADMIN, br#"{"format_version":1,"id":"d","extract_rules":[{"id":"x"}]}"#.to_vec()), 400, "MALFORMED_DICTIONARY")?;
    check(env.post("/v1/admin/namespaces", ADMIN, json!({"tenant": "acme", "namespace": "piped", "pipeline": "no-such"})), 400, "INVALID_CONFIG")?;
    check(env.post("/v1/acme/claims/graph/edges", BOB, json!({"from": "e/present.txt", "to": "e/present.txt"})), 400, "SELF_LOOP")?;
    check(env.post("/v1/acme/claims/graph/edges", BOB, json!({"from": "e/present.txt", "to": "e/other.txt", "weight": 1.5})), 400, "WEIGHT_OUT_OF_RANGE")?;
    check(env.post("/v1/acme/claims/graph/edges", BOB, json!({"from": "e/present.txt", "to": "rdos://acme/secret/x"})), 400, "CROSS_NAMESPACE")?;
    expect_status(&env.post("/v1/admin/namespaces", ADMIN, json!({"tenant": "acme", "namespace": "tight", "max_partitions": 1})), 201, "tight")?;
    check(env.put("tight", "a.txt", ADMIN, "x", &[("p1", "a=1"), ("p2", "b=2")]), 400, "TOO_MANY_PARTITIONS")?;

    // 422
    expect_status(&env.post("/v1/admin/namespaces", ADMIN, json!({"tenant": "acme", "namespace": "empty"})), 201, "empty")?;
    check(env.post("/v1/acme/empty/graph/pagerank", ADMIN, json!({})), 422, "EMPTY_GRAPH")?;
    if env.store.pipeline_doc("insurance").is_none() {
        install_insurance(env, "claims")?;
    }
    expect_status(&env.post("/v1/admin/namespace-pipeline", ADMIN, json!({"tenant": "acme", "namespace": "tight", "pipeline": "insurance"})), 201, "attach")?;
    let put = env.put("tight", "forms/9.txt", ADMIN, "CID: 9\n", &[]);
    expect_status(&put, 201, "put survives pipeline failure")?;
    ensure!(!put.json()["pipeline"]["failed"].is_null(), "ingest failure reported {:?}", put.json());
    check(env.post("/v1/acme/tight/pipeline/run", ADMIN, json!({"path": "forms/9.txt"})), 422, "PIPELINE_STAGE_ERROR")?;

    // 507
    expect_status(&env.post("/v1/admin/namespaces", ADMIN, json!({"tenant": "acme", "namespace": "small", "quota": 1})), 201, "small")?;
    expect_status(&env.put("small", "a", ADMIN, "1", &[]), 201, "first")?;
    check(env.put("small", "b", ADMIN, "2", &[]), 507, "QUOTA_EXCEEDED")?;

    // 503: corrupt every copy of one blob, then take nodes down
    let digest = hex::encode(Sha256::digest(b"x"));
    for root in &env.roots {
        let p = root.join(blob_path(&digest));
        if p.exists() {
            std::fs::write(&p, b"y").map_err(|e| e.to_string())?;
        }
    }
    check(env.get("claims", "e/present.txt", BOB), 503, "DIGEST_MISMATCH")?;
    for i in 1..=3 {
        env.store.set_node_up(NodeId(i), false);
    }
    check(env.put("claims", "e/down.txt", BOB, "z", &[]), 503, "INSUFFICIENT_REPLICAS")?;
    for i in 1..=3 {
        env.store.set_node_up(NodeId(i), true);
    }
    Ok(seen)
}

pub fn small_cluster_codes(seen: &mut BTreeSet<String>) -> Result<(), String> {
    let env = Env::new(Shape { nodes: 2, domains: 2, replicas: 3, max_blob: 1024 });
    let r = env.put("claims", "a", BOB, "x", &[]);
    ensure!(r.status == 503 && r.code() == "INSUFFICIENT_REPLICAS", "two nodes, r=3: {} {}", r.status, r.code());
    seen.insert(r.code());
    drop(env);
    let env = Env::new(Shape { max_blob: 1024, ..Default::default() });
    let r = env.put("claims", "big", BOB, vec![0u8; 4096], &[]);
    ensure!(r.status == 413 && r.code() == "PAYLOAD_TOO_LARGE", "oversized: {} {}", r.status, r.code());
    seen.insert(r.code());
    Ok(())
}

/// Deterministic pseudo-random bytes, generated on the fly. The output does
/// not depend on how callers size their reads.
pub struct NoiseReader {
    rng: ChaCha8Rng,
    block: [u8; 4096],
    pos: usize,
    left: u64,
}

impl NoiseReader {
    pub fn new(seed: u64, len: u64) -> Self {
        Self { rng: ChaCha8Rng::seed_from_u64(seed), block: [0; 4096], pos: 4096, left: len }
    }
}

impl Read for NoiseReader {
    fn read(&mut self, buf: &mut [u8]) -> std::io::Result<usize> {
        if self.left == 0 || buf.is_empty() {
            return Ok(0);
        }
        if self.pos == self.block.len() {
            self.rng.fill_bytes(&mut self.block);
            self.pos = 0;
        }
        let n = buf.len().min(self.block.len() - self.pos).min(self.left as usize);
        buf[..n].copy_from_slice(&self.block[self.pos..self.pos + n]);
        self.pos += n;
        self.left -= n as u64;
        Ok(n)
    }
}

/// PUT `len` streamed bytes, then GET and compare byte for byte.
pub fn streamed_blob(env: &Env, len: u64) -> Result<(), String> {
    let r = env.put("claims", "big/blob.bin", BOB, Body::sized(NoiseReader::new(42, len), len), &[]);
    expect_status(&r, 201, "big put")?;
    ensure!(r.json()["size"] == json!(len), "size {:?}", r.json()["size"]);
    let mut resp = env
        .http
        .get(env.url("/v1/acme/claims/objects/big/blob.bin"))
        .bearer_auth(BOB)
        .send()
        .map_err(|e| e.to_string())?;
    ensure!(resp.status().as_u16() == 200, "big get {}", resp.status());
    let mut want = NoiseReader::new(42, len);
    let mut got = vec![0u8; 1 << 20];
    let mut exp = vec![0u8; 1 << 20];
    let mut total = 0u64;
    loop {
        let n = resp.read(&mut got).map_err(|e| e.to_string())?;
        if n == 0 {
            break;
        }
        want.read_exact(&mut exp[..n]).map_err(|_| format!("server sent more than {len} bytes"))?;
        ensure!(got[..n] == exp[..n], "bytes differ near offset {total}");
        total += n as u64;
    }
    ensure!(total == len, "read {total} of {len} bytes");
    Ok(())
}
