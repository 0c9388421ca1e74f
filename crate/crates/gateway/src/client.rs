//! Blocking HTTP client used by the `rdos` CLI.

use std::io::Write;

use reqwest::blocking::{Body, RequestBuilder, Response};
use reqwest::Method;
use serde_json::Value;

use crate::error::ErrorBody;
use crate::server::META_PREFIX;

pub const DEFAULT_ADDR: &str = "http://127.0.0.1:7480";

#[derive(Debug, thiserror::Error)]
pub enum ClientError {
    #[error("{status} {}: {}", .body.code, .body.message)]
    Api { status: u16, body: ErrorBody },
    #[error("transport: {0}")]
    Transport(#[from] reqwest::Error),
    #[error("io: {0}")]
    Io(#[from] std::io::Error),
}

impl ClientError {
    pub fn code(&self) -> Option<&str> {
        match self {
            ClientError::Api { body, .. } => Some(&body.code),
            _ => None,
        }
    }
}

pub type ClientResult<T> = Result<T, ClientError>;

pub struct Client {
    base: String,
    token: Option<String>,
    http: reqwest::blocking::Client,
}

/// Percent-encode each path segment, keeping the slashes.
fn encode_path(path: &str) -> String {
    path.split('/')
        .map(|seg| {
            seg.bytes()
                .map(|b| match b {
                    b'A'..=b'Z' | b'a'..=b'z' | b'0'..=b'9' | b'-' | b'.' | b'_' | b'~' => (b as char).to_string(),
                    _ => format!("%{b:02X}"),
                })
                .collect::<String>()
        })
        .collect::<Vec<_>>()
        .join("/")
}

impl Client {
    pub fn new(addr: &str, token: Option<String>) -> Self {
        let http = reqwest::blocking::Client::builder().timeout(None).build().expect("http client");
        Self { base: addr.trim_end_matches('/').to_string(), token, http }
    }

    /// From `RDOS_ADDR` and `RDOS_TOKEN`.
    pub fn from_env() -> Self {
        let addr = std::env::var("RDOS_ADDR").unwrap_or_else(|_| DEFAULT_ADDR.to_string());
        Self::new(&addr, std::env::var("RDOS_TOKEN").ok())
    }

    fn req(&self, method: Method, path: &str) -> RequestBuilder {
        let r = self.http.request(method, format!("{}{path}", self.base));
        match &self.token {
            Some(t) => r.bearer_auth(t),
            None => r,
        }
    }

    fn check(resp: Response) -> ClientResult<Response> {
        let status = resp.status();
        if status.is_success() {
            return Ok(resp);
        }
        let text = resp.text()?;
        let body = serde_json::from_str::<Value>(&text)
            .ok()
            .and_then(|v| serde_json::from_value::<ErrorBody>(v["error"].clone()).ok())
            .unwrap_or(ErrorBody { code: "HTTP".into(), message: text });
        Err(ClientError::Api { status: status.as_u16(), body })
    }

    fn json(&self, method: Method, path: &str, body: Option<&Value>) -> ClientResult<Value> {
        let mut r = self.req(method, path);
        if let Some(b) = body {
            r = r.json(b);
        }
        let resp = Self::check(r.send()?)?;
        Ok(resp.json()?)
    }

    fn object_path(tenant: &str, ns: &str, path: &str) -> String {
        format!("/v1/{tenant}/{ns}/objects/{}", encode_path(path))
    }

    pub fn put_object(
        &self,
        tenant: &str,
        ns: &str,
        path: &str,
        body: impl Into<Body>,
        meta: &[(String, String)],
    ) -> ClientResult<Value> {
        let mut r = self.req(Method::PUT, &Self::object_path(tenant, ns, path)).body(body);
        for (partition, pairs) in meta {
            r = r.header(format!("{META_PREFIX}{partition}"), pairs);
        }
        Ok(Self::check(r.send()?)?.json()?)
    }

    /// Streaming read; the caller copies the body out.
    pub fn get_object(&self, tenant: &str, ns: &str, path: &str, version: Option<u64>) -> ClientResult<Response> {
        let mut r = self.req(Method::GET, &Self::object_path(tenant, ns, path));
        if let Some(v) = version {
            r = r.query(&[("version", v)]);
        }
        Self::check(r.send()?)
    }

    pub fn download(&self, tenant: &str, ns: &str, path: &str, version: Option<u64>, out: &mut dyn Write) -> ClientResult<u64> {
        let mut resp = self.get_object(tenant, ns, path, version)?;
        Ok(resp.copy_to(out)?)
    }

    pub fn head_object(&self, tenant: &str, ns: &str, path: &str) -> ClientResult<reqwest::header::HeaderMap> {
        let resp = Self::check(self.req(Method::HEAD, &Self::object_path(tenant, ns, path)).send()?)?;
        Ok(resp.headers().clone())
    }

    pub fn delete_object(&self, tenant: &str, ns: &str, path: &str) -> ClientResult<Value> {
        self.json(Method::DELETE, &Self::object_path(tenant, ns, path), None)
    }

    pub fn versions(&self, tenant: &str, ns: &str, path: &str) -> ClientResult<Value> {
        self.json(Method::GET, &format!("{}/versions", Self::object_path(tenant, ns, path)), None)
    }

    pub fn put_meta(&self, tenant: &str, ns: &str, path: &str, partition: &str, pairs: &Value) -> ClientResult<Value> {
        self.json(Method::PUT, &format!("{}/meta/{partition}", Self::object_path(tenant, ns, path)), Some(pairs))
    }

    pub fn get_meta(&self, tenant: &str, ns: &str, path: &str, partition: &str) -> ClientResult<Value> {
        self.json(Method::GET, &format!("{}/meta/{partition}", Self::object_path(tenant, ns, path)), None)
    }

    pub fn delete_meta(&self, tenant: &str, ns: &str, path: &str, partition: &str) -> ClientResult<Value> {
        self.json(Method::DELETE, &format!("{}/meta/{partition}", Self::object_path(tenant, ns, path)), None)
    }

    pub fn query(&self, tenant: &str, ns: &str, body: &Value) -> ClientResult<Value> {
        self.json(Method::POST, &format!("/v1/{tenant}/{ns}/query"), Some(body))
    }

    /// `op` is one of neighbors, traverse, pagerank, class-query, edges.
    pub fn graph(&self, tenant: &str, ns: &str, op: &str, body: &Value) -> ClientResult<Value> {
        self.json(Method::POST, &format!("/v1/{tenant}/{ns}/graph/{op}"), Some(body))
    }

    /// `op` is backfill or run.
    pub fn pipeline(&self, tenant: &str, ns: &str, op: &str, body: &Value) -> ClientResult<Value> {
        self.json(Method::POST, &format!("/v1/{tenant}/{ns}/pipeline/{op}"), Some(body))
    }

    pub fn admin(&self, op: &str, body: &Value) -> ClientResult<Value> {
        self.json(Method::POST, &format!("/v1/admin/{op}"), Some(body))
    }

    /// Publish a dictionary or pipeline document as given.
    pub fn publish(&self, kind: &str, doc: Vec<u8>) -> ClientResult<Value> {
        let r = self.req(Method::POST, &format!("/v1/admin/{kind}")).header("content-type", "application/json").body(doc);
        Ok(Self::check(r.send()?)?.json()?)
    }

    pub fn nodes(&self) -> ClientResult<Value> {
        self.json(Method::GET, "/v1/admin/nodes", None)
    }
}
