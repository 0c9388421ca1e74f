//! HTTP routes over a [`Store`].

use std::collections::{BTreeMap, BTreeSet};
use std::io::Read;
use std::net::SocketAddr;
use std::path::PathBuf;
use std::sync::Arc;

use axum::body::{Body, Bytes};
use axum::extract::{DefaultBodyLimit, Path, Query, State};
use axum::http::{HeaderMap, HeaderName, HeaderValue, StatusCode};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post, put};
use axum::{Json, Router};
use futures_util::StreamExt;
use rdos_core::graph::{Direction, EdgeConstraint};
use rdos_core::index::parse_query;
use rdos_core::model::{MetadataPartition, NamespaceId, ObjectUri, PartitionLimits, VersionId};
use rdos_core::pipeline::{parse_dictionary_doc, parse_pipeline_doc, PipelineRun};
use rdos_core::storage::{AdminRecord, BlobSource, Store};
use rdos_core::tenancy::{require, Action, AdminOp, Grant, NamespaceConfig, Principal, Resource};
use rdos_core::Error;
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};
use sha2::{Digest, Sha256};
use tokio::io::AsyncWriteExt;

use crate::error::{ApiError, ApiResult};

pub const META_PREFIX: &str = "x-rdos-meta-";
pub const VERSION_HEADER: &str = "x-rdos-version";
pub const DIGEST_HEADER: &str = "x-rdos-digest";

const READ_CHUNK: usize = 256 * 1024;
const JSON_LIMIT: usize = 16 << 20;

#[derive(Clone)]
pub struct AppState {
    pub store: Arc<Store>,
    pub spool: PathBuf,
}

impl AppState {
    pub fn new(store: Arc<Store>) -> Self {
        Self { store, spool: std::env::temp_dir() }
    }
}

pub fn router(state: AppState) -> Router {
    let objects = Router::new()
        .route(
            "/v1/{tenant}/{ns}/objects/{*rest}",
            put(put_target).get(get_target).head(head_target).delete(delete_target),
        )
        .layer(DefaultBodyLimit::disable());
    let rest = Router::new()
        .route("/v1/{tenant}/{ns}/query", post(query))
        .route("/v1/{tenant}/{ns}/graph/{op}", post(graph))
        .route("/v1/{tenant}/{ns}/pipeline/{op}", post(pipeline))
        .route("/v1/admin/nodes", get(nodes))
        .route("/v1/admin/{op}", post(admin))
        .route("/health", get(|| async { "ok" }))
        .layer(DefaultBodyLimit::max(JSON_LIMIT));
    objects.merge(rest).with_state(state)
}

/// Serve until `shutdown` resolves.
pub async fn serve(
    listener: tokio::net::TcpListener,
    state: AppState,
    shutdown: impl std::future::Future<Output = ()> + Send + 'static,
) -> std::io::Result<()> {
    axum::serve(listener, router(state)).with_graceful_shutdown(shutdown).await
}

/// A server on its own runtime thread; stops when dropped.
pub struct ServerHandle {
    pub addr: SocketAddr,
    stop: Option<tokio::sync::oneshot::Sender<()>>,
    thread: Option<std::thread::JoinHandle<()>>,
}

impl ServerHandle {
    pub fn url(&self) -> String {
        format!("http://{}", self.addr)
    }
}

impl Drop for ServerHandle {
    fn drop(&mut self) {
        if let Some(s) = self.stop.take() {
            let _ = s.send(());
        }
        if let Some(t) = self.thread.take() {
            let _ = t.join();
        }
    }
}

/// Bind an ephemeral local port and serve `state` in the background.
pub fn spawn(state: AppState) -> std::io::Result<ServerHandle> {
    let listener = std::net::TcpListener::bind("127.0.0.1:0")?;
    listener.set_nonblocking(true)?;
    let addr = listener.local_addr()?;
    let (tx, rx) = tokio::sync::oneshot::channel::<()>();
    let rt = tokio::runtime::Builder::new_multi_thread().worker_threads(2).enable_all().build()?;
    let thread = std::thread::spawn(move || {
        rt.block_on(async move {
            let listener = tokio::net::TcpListener::from_std(listener).expect("listener");
            let _ = serve(listener, state, async move {
                let _ = rx.await;
            })
            .await;
        });
    });
    Ok(ServerHandle { addr, stop: Some(tx), thread: Some(thread) })
}

// ---- helpers ----

fn principal(state: &AppState, headers: &HeaderMap) -> ApiResult<Principal> {
    let token = headers
        .get(axum::http::header::AUTHORIZATION)
        .and_then(|v| v.to_str().ok())
        .and_then(|v| v.strip_prefix("Bearer "))
        .ok_or_else(|| ApiError::from(Error::Unauthenticated("missing bearer token".into())))?;
    state.store.authenticate(token.trim()).ok_or_else(|| Error::Unauthenticated("unknown token".into()).into())
}

async fn blocking<T: Send + 'static>(f: impl FnOnce() -> rdos_core::Result<T> + Send + 'static) -> ApiResult<T> {
    match tokio::task::spawn_blocking(f).await {
        Ok(r) => r.map_err(ApiError::from),
        Err(e) => Err(ApiError::new("IO_ERROR", format!("worker failed: {e}"))),
    }
}

fn parse_json<T: DeserializeOwned>(body: &[u8]) -> ApiResult<T> {
    let body = if body.iter().all(u8::is_ascii_whitespace) { b"{}".as_slice() } else { body };
    serde_json::from_slice(body).map_err(|e| ApiError::bad_request(format!("request body: {e}")))
}

fn ns_id(tenant: &str, ns: &str) -> ApiResult<NamespaceId> {
    Ok(NamespaceId::new(tenant, ns)?)
}

/// A full `rdos://` URI, or a path inside `ns`.
fn resolve(ns: &NamespaceId, s: &str) -> ApiResult<ObjectUri> {
    if s.starts_with("rdos://") {
        Ok(s.parse()?)
    } else {
        Ok(ns.uri(s)?)
    }
}

enum Target {
    Object(String),
    Versions(String),
    Meta(String, String),
}

fn target(rest: &str) -> Target {
    if let Some(p) = rest.strip_suffix("/versions") {
        return Target::Versions(p.to_string());
    }
    if let Some((p, name)) = rest.rsplit_once("/meta/") {
        if !name.contains('/') {
            return Target::Meta(p.to_string(), name.to_string());
        }
    }
    Target::Object(rest.to_string())
}

fn ok_json(status: StatusCode, v: Value) -> Response {
    (status, Json(v)).into_response()
}

fn run_json(run: &PipelineRun) -> Value {
    json!({
        "stages": run.trace,
        "failed": run.failed.as_ref().map(|(stage, cause)| json!({"stage": stage, "cause": cause})),
    })
}

#[derive(Deserialize)]
struct VersionQuery {
    version: Option<u64>,
}

// ---- objects ----

async fn put_target(
    State(st): State<AppState>,
    Path((tenant, ns, rest)): Path<(String, String, String)>,
    headers: HeaderMap,
    body: Body,
) -> ApiResult<Response> {
    let actor = principal(&st, &headers)?;
    let ns = ns_id(&tenant, &ns)?;
    match target(&rest) {
        Target::Object(path) => put_object(st, actor, ns.uri(&path)?, headers, body).await,
        Target::Meta(path, name) => {
            let uri = ns.uri(&path)?;
            let bytes = axum::body::to_bytes(body, JSON_LIMIT)
                .await
                .map_err(|e| ApiError::bad_request(format!("body: {e}")))?;
            let pairs: BTreeMap<String, String> = parse_json(&bytes)?;
            let part = MetadataPartition::from_pairs(&name, pairs, &PartitionLimits::default())
                .map_err(Error::InvalidPartition)?;
            let store = st.store.clone();
            let u = uri.clone();
            let rec = blocking(move || store.put_annotation(&actor, &u, part)).await?;
            Ok(ok_json(StatusCode::OK, json!({"uri": uri, "version": rec.version(), "partition": name})))
        }
        Target::Versions(_) => Err(ApiError::bad_request("versions is read-only")),
    }
}

fn header_partitions(headers: &HeaderMap) -> ApiResult<Vec<MetadataPartition>> {
    let mut out = Vec::new();
    for (name, value) in headers {
        let Some(part) = name.as_str().strip_prefix(META_PREFIX) else { continue };
        let text = value.to_str().map_err(|_| ApiError::bad_request(format!("header {name} is not text")))?;
        let p = MetadataPartition::parse_header_value(part, text, &PartitionLimits::default())
            .map_err(Error::InvalidPartition)?;
        out.push(p);
    }
    Ok(out)
}

async fn put_object(
    st: AppState,
    actor: Principal,
    uri: ObjectUri,
    headers: HeaderMap,
    body: Body,
) -> ApiResult<Response> {
    let partitions = header_partitions(&headers)?;
    let max = st.store.config().max_blob;
    let spool = tempfile::NamedTempFile::new_in(&st.spool)
        .map_err(|e| ApiError::new("IO_ERROR", format!("spool: {e}")))?;
    let io = |e: std::io::Error| ApiError::new("IO_ERROR", format!("spool: {e}"));
    let mut file = tokio::fs::File::from_std(spool.reopen().map_err(io)?);
    let mut hasher = Sha256::new();
    let mut size = 0u64;
    let mut stream = body.into_data_stream();
    while let Some(chunk) = stream.next().await {
        let chunk = chunk.map_err(|e| ApiError::bad_request(format!("body: {e}")))?;
        size += chunk.len() as u64;
        if size > max {
            return Err(Error::PayloadTooLarge(size).into());
        }
        hasher.update(&chunk);
        file.write_all(&chunk).await.map_err(io)?;
    }
    file.flush().await.map_err(io)?;
    drop(file);
    let digest = hex::encode(hasher.finalize());

    let store = st.store.clone();
    let u = uri.clone();
    let d = digest.clone();
    let (version, run) = blocking(move || {
        let src = BlobSource::file(spool.path(), d, size);
        let out = store.put_object_with_pipeline(&actor, &u, &src, partitions);
        drop(spool);
        out
    })
    .await?;
    let mut resp = ok_json(
        StatusCode::CREATED,
        json!({
            "uri": uri,
            "version": version,
            "digest": digest,
            "size": size,
            "pipeline": run.as_ref().map(run_json),
        }),
    );
    resp.headers_mut().insert(VERSION_HEADER, HeaderValue::from(version.0));
    Ok(resp)
}

fn record_headers(h: &mut HeaderMap, rec: &rdos_core::model::ObjectRecord) {
    h.insert(VERSION_HEADER, HeaderValue::from(rec.version().0));
    if let Ok(v) = HeaderValue::from_str(&rec.system.content_digest) {
        h.insert(DIGEST_HEADER, v.clone());
        h.insert(axum::http::header::ETAG, HeaderValue::from_str(&format!("\"{}\"", rec.system.content_digest)).unwrap_or(v));
    }
    h.insert(axum::http::header::CONTENT_TYPE, HeaderValue::from_static("application/octet-stream"));
    for (name, p) in &rec.partitions {
        let text: Vec<String> = p.pairs.iter().map(|(k, v)| format!("{k}={v}")).collect();
        if let (Ok(n), Ok(v)) =
            (HeaderName::from_bytes(format!("{META_PREFIX}{name}").as_bytes()), HeaderValue::from_str(&text.join(";")))
        {
            h.insert(n, v);
        }
    }
}

async fn get_target(
    State(st): State<AppState>,
    Path((tenant, ns, rest)): Path<(String, String, String)>,
    Query(q): Query<VersionQuery>,
    headers: HeaderMap,
) -> ApiResult<Response> {
    let actor = principal(&st, &headers)?;
    let ns = ns_id(&tenant, &ns)?;
    let store = st.store.clone();
    match target(&rest) {
        Target::Object(path) => {
            let uri = ns.uri(&path)?;
            let version = q.version.map(VersionId);
            let (rec, reader) = blocking(move || store.open_object(&actor, &uri, version)).await?;
            let (tx, rx) = tokio::sync::mpsc::channel::<std::io::Result<Bytes>>(4);
            tokio::task::spawn_blocking(move || pump(reader, tx));
            let stream = futures_util::stream::unfold(rx, |mut rx| async move { rx.recv().await.map(|c| (c, rx)) });
            let mut resp = Response::new(Body::from_stream(stream));
            record_headers(resp.headers_mut(), &rec);
            resp.headers_mut().insert(axum::http::header::CONTENT_LENGTH, HeaderValue::from(rec.system.size));
            Ok(resp)
        }
        Target::Versions(path) => {
            let uri = ns.uri(&path)?;
            let u = uri.clone();
            let versions = blocking(move || store.list_versions(&actor, &u)).await?;
            Ok(ok_json(StatusCode::OK, json!({"uri": uri, "versions": versions})))
        }
        Target::Meta(path, name) => {
            let uri = ns.uri(&path)?;
            let p = blocking(move || store.get_annotation(&actor, &uri, &name)).await?;
            Ok(ok_json(StatusCode::OK, json!({"name": p.name, "pairs": p.pairs})))
        }
    }
}

fn pump(mut reader: Box<dyn Read + Send>, tx: tokio::sync::mpsc::Sender<std::io::Result<Bytes>>) {
    loop {
        let mut buf = vec![0u8; READ_CHUNK];
        match reader.read(&mut buf) {
            Ok(0) => return,
            Ok(n) => {
                buf.truncate(n);
                if tx.blocking_send(Ok(Bytes::from(buf))).is_err() {
                    return;
                }
            }
            Err(e) => {
                let _ = tx.blocking_send(Err(e));
                return;
            }
        }
    }
}

async fn head_target(
    State(st): State<AppState>,
    Path((tenant, ns, rest)): Path<(String, String, String)>,
    Query(q): Query<VersionQuery>,
    headers: HeaderMap,
) -> ApiResult<Response> {
    let actor = principal(&st, &headers)?;
    let ns = ns_id(&tenant, &ns)?;
    let Target::Object(path) = target(&rest) else {
        return Err(ApiError::bad_request("HEAD applies to objects only"));
    };
    let uri = ns.uri(&path)?;
    let store = st.store.clone();
    let rec = blocking(move || store.head_object(&actor, &uri, q.version.map(VersionId))).await?;
    let mut resp = StatusCode::OK.into_response();
    record_headers(resp.headers_mut(), &rec);
    resp.headers_mut().insert(axum::http::header::CONTENT_LENGTH, HeaderValue::from(rec.system.size));
    Ok(resp)
}

async fn delete_target(
    State(st): State<AppState>,
    Path((tenant, ns, rest)): Path<(String, String, String)>,
    headers: HeaderMap,
) -> ApiResult<Response> {
    let actor = principal(&st, &headers)?;
    let ns = ns_id(&tenant, &ns)?;
    let store = st.store.clone();
    match target(&rest) {
        Target::Object(path) => {
            let uri = ns.uri(&path)?;
            let u = uri.clone();
            let v = blocking(move || store.delete_object(&actor, &u)).await?;
            let mut resp = ok_json(StatusCode::OK, json!({"uri": uri, "version": v}));
            resp.headers_mut().insert(VERSION_HEADER, HeaderValue::from(v.0));
            Ok(resp)
        }
        Target::Meta(path, name) => {
            let uri = ns.uri(&path)?;
            let u = uri.clone();
            let rec = blocking(move || store.delete_annotation(&actor, &u, &name)).await?;
            Ok(ok_json(StatusCode::OK, json!({"uri": uri, "version": rec.version()})))
        }
        Target::Versions(_) => Err(ApiError::bad_request("versions is read-only")),
    }
}

// ---- query and graph ----

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct QueryBody {
    query: String,
    #[serde(default)]
    offset: usize,
    #[serde(default)]
    limit: Option<usize>,
}

async fn query(
    State(st): State<AppState>,
    Path((tenant, ns)): Path<(String, String)>,
    headers: HeaderMap,
    body: Bytes,
) -> ApiResult<Response> {
    let actor = principal(&st, &headers)?;
    let ns = ns_id(&tenant, &ns)?;
    let q: QueryBody = parse_json(&body)?;
    let store = st.store.clone();
    let r = blocking(move || store.query_text(&actor, &ns, &q.query, q.offset, q.limit)).await?;
    Ok(ok_json(StatusCode::OK, json!({"total": r.total, "hits": r.hits})))
}

fn out() -> Direction {
    Direction::Out
}
fn default_label() -> String {
    "RelTo".into()
}
fn unit_weight() -> f64 {
    1.0
}
fn damping() -> f64 {
    0.85
}
fn tolerance() -> f64 {
    1e-10
}
fn max_iters() -> usize {
    100
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct NeighborsBody {
    node: String,
    #[serde(default = "out")]
    direction: Direction,
    #[serde(default)]
    label: Option<String>,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct TraverseBody {
    start: String,
    max_depth: usize,
    #[serde(default = "out")]
    direction: Direction,
    #[serde(default)]
    min_weight: Option<f64>,
    #[serde(default)]
    label: Option<String>,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct PageRankBody {
    #[serde(default = "damping")]
    damping: f64,
    #[serde(default = "tolerance")]
    tolerance: f64,
    #[serde(default = "max_iters")]
    max_iters: usize,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct ConstraintBody {
    #[serde(default = "out")]
    direction: Direction,
    #[serde(default)]
    label: Option<String>,
    #[serde(default)]
    min_weight: Option<f64>,
    /// Query text selecting the neighbor.
    target: String,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct ClassQueryBody {
    /// Query text selecting candidate nodes.
    node: String,
    #[serde(default)]
    constraints: Vec<ConstraintBody>,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct EdgeBody {
    from: String,
    to: String,
    #[serde(default = "default_label")]
    label: String,
    #[serde(default = "unit_weight")]
    weight: f64,
}

async fn graph(
    State(st): State<AppState>,
    Path((tenant, ns, op)): Path<(String, String, String)>,
    headers: HeaderMap,
    body: Bytes,
) -> ApiResult<Response> {
    let actor = principal(&st, &headers)?;
    let ns = ns_id(&tenant, &ns)?;
    let store = st.store.clone();
    let v = match op.as_str() {
        "neighbors" => {
            let b: NeighborsBody = parse_json(&body)?;
            let node = resolve(&ns, &b.node)?;
            let edges = blocking(move || store.neighbors(&actor, &ns, &node, b.direction, b.label.as_deref())).await?;
            json!({ "edges": edges })
        }
        "traverse" => {
            let b: TraverseBody = parse_json(&body)?;
            let start = resolve(&ns, &b.start)?;
            let reached = blocking(move || {
                store.traverse(&actor, &ns, &start, b.max_depth, b.direction, b.min_weight, b.label.as_deref())
            })
            .await?;
            json!({ "reached": reached })
        }
        "pagerank" => {
            let b: PageRankBody = parse_json(&body)?;
            let s = blocking(move || store.pagerank(&actor, &ns, b.damping, b.tolerance, b.max_iters)).await?;
            serde_json::to_value(s).map_err(|e| ApiError::new("IO_ERROR", e.to_string()))?
        }
        "class-query" => {
            let b: ClassQueryBody = parse_json(&body)?;
            let node = parse_query(&b.node)?;
            let constraints = b
                .constraints
                .into_iter()
                .map(|c| {
                    Ok(EdgeConstraint {
                        direction: c.direction,
                        label: c.label,
                        min_weight: c.min_weight,
                        target: parse_query(&c.target)?,
                    })
                })
                .collect::<rdos_core::Result<Vec<_>>>()?;
            let uris: BTreeSet<ObjectUri> = blocking(move || store.class_query(&actor, &ns, &node, &constraints)).await?;
            json!({ "uris": uris })
        }
        "edges" => {
            let b: EdgeBody = parse_json(&body)?;
            let from = resolve(&ns, &b.from)?;
            let to = resolve(&ns, &b.to)?;
            let f = from.clone();
            let rec = blocking(move || store.put_relation(&actor, &f, &to, &b.label, b.weight)).await?;
            return Ok(ok_json(StatusCode::OK, json!({"uri": from, "version": rec.version()})));
        }
        other => return Err(Error::NotFound(format!("graph operation {other:?}")).into()),
    };
    Ok(ok_json(StatusCode::OK, v))
}

// ---- pipelines ----

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct BackfillBody {
    #[serde(default)]
    pipeline: Option<String>,
    #[serde(default)]
    cursor: Option<String>,
    #[serde(default)]
    limit: Option<usize>,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RunBody {
    path: String,
}

async fn pipeline(
    State(st): State<AppState>,
    Path((tenant, ns, op)): Path<(String, String, String)>,
    headers: HeaderMap,
    body: Bytes,
) -> ApiResult<Response> {
    let actor = principal(&st, &headers)?;
    let ns = ns_id(&tenant, &ns)?;
    let store = st.store.clone();
    let v = match op.as_str() {
        "backfill" => {
            let b: BackfillBody = parse_json(&body)?;
            let cursor = b.cursor.as_deref().map(|c| resolve(&ns, c)).transpose()?;
            let r = blocking(move || store.backfill(&actor, &ns, b.pipeline.as_deref(), cursor.as_ref(), b.limit)).await?;
            serde_json::to_value(r).map_err(|e| ApiError::new("IO_ERROR", e.to_string()))?
        }
        "run" => {
            let b: RunBody = parse_json(&body)?;
            let uri = resolve(&ns, &b.path)?;
            let run = blocking(move || store.run_pipeline(&actor, &uri)).await?;
            if let Some(e) = run.error() {
                return Err(e.into());
            }
            run_json(&run)
        }
        other => return Err(Error::NotFound(format!("pipeline operation {other:?}")).into()),
    };
    Ok(ok_json(StatusCode::OK, v))
}

// ---- admin ----

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct TenantBody {
    tenant: String,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct GrantBody {
    account: String,
    tenant: String,
    namespace: String,
    grants: BTreeSet<Grant>,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct SetPipelineBody {
    tenant: String,
    namespace: String,
    pipeline: Option<String>,
}

#[derive(Serialize)]
struct Published<'a> {
    id: &'a str,
    version: Option<u32>,
}

async fn admin(
    State(st): State<AppState>,
    Path(op): Path<String>,
    headers: HeaderMap,
    body: Bytes,
) -> ApiResult<Response> {
    let actor = principal(&st, &headers)?;
    let store = st.store.clone();
    let tenancy = |op: AdminOp| AdminRecord::Tenancy { op };
    let (record, reply) = match op.as_str() {
        "tenants" => {
            let b: TenantBody = parse_json(&body)?;
            let reply = json!({"tenant": b.tenant});
            (tenancy(AdminOp::CreateTenant { tenant: b.tenant }), reply)
        }
        "principals" => {
            let p: Principal = parse_json(&body)?;
            let reply = json!({"account": p.account});
            (tenancy(AdminOp::AddPrincipal { principal: p }), reply)
        }
        "namespaces" => {
            let c: NamespaceConfig = parse_json(&body)?;
            ns_id(&c.tenant, &c.namespace)?;
            let reply = serde_json::to_value(&c).map_err(|e| ApiError::new("IO_ERROR", e.to_string()))?;
            (tenancy(AdminOp::CreateNamespace { config: c }), reply)
        }
        "grants" => {
            let b: GrantBody = parse_json(&body)?;
            let ns = ns_id(&b.tenant, &b.namespace)?;
            let reply = json!({"account": b.account, "grants": b.grants});
            (tenancy(AdminOp::Grant { account: b.account, ns, grants: b.grants }), reply)
        }
        "namespace-pipeline" => {
            let b: SetPipelineBody = parse_json(&body)?;
            let ns = ns_id(&b.tenant, &b.namespace)?;
            let reply = json!({"pipeline": b.pipeline});
            (tenancy(AdminOp::SetPipeline { ns, pipeline: b.pipeline }), reply)
        }
        "dictionaries" => {
            let doc = parse_dictionary_doc(&body)?;
            let id = doc.id.clone();
            let v = blocking(move || store.admin(&actor, AdminRecord::PublishDictionary { doc })).await?;
            return Ok(ok_json(StatusCode::CREATED, json!(Published { id: &id, version: v })));
        }
        "pipelines" => {
            let doc = parse_pipeline_doc(&body)?;
            let id = doc.id.clone();
            let v = blocking(move || store.admin(&actor, AdminRecord::PublishPipeline { doc })).await?;
            return Ok(ok_json(StatusCode::CREATED, json!(Published { id: &id, version: v })));
        }
        "repair" => {
            require(&actor, Action::ClusterOp, &Resource::Cluster)?;
            let r = blocking(move || Ok(store.repair())).await?;
            return Ok(ok_json(StatusCode::OK, json!(r)));
        }
        "rebuild" => {
            require(&actor, Action::ClusterOp, &Resource::Cluster)?;
            let r = blocking(move || Ok(store.rebuild())).await?;
            return Ok(ok_json(StatusCode::OK, json!(r)));
        }
        "gc" => {
            require(&actor, Action::ClusterOp, &Resource::Cluster)?;
            let n = blocking(move || Ok(store.gc())).await?;
            return Ok(ok_json(StatusCode::OK, json!({"removed": n})));
        }
        other => return Err(Error::NotFound(format!("admin operation {other:?}")).into()),
    };
    blocking(move || store.admin(&actor, record)).await?;
    Ok(ok_json(StatusCode::CREATED, reply))
}

async fn nodes(State(st): State<AppState>, headers: HeaderMap) -> ApiResult<Response> {
    let actor = principal(&st, &headers)?;
    require(&actor, Action::ClusterOp, &Resource::Cluster)?;
    Ok(ok_json(StatusCode::OK, json!({"nodes": st.store.nodes()})))
}
