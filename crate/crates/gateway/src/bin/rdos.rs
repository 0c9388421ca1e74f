use std::io::Write;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use rdos_gateway::client::{Client, DEFAULT_ADDR};
use rdos_gateway::config::Config;
use rdos_gateway::AppState;
use serde_json::{json, Value};

#[derive(Parser)]
#[command(name = "rdos", about = "Object store gateway and client")]
struct Cli {
    /// Gateway base URL.
    #[arg(long, env = "RDOS_ADDR", default_value = DEFAULT_ADDR, global = true)]
    addr: String,
    /// Bearer token.
    #[arg(long, env = "RDOS_TOKEN", global = true, hide_env_values = true)]
    token: Option<String>,
    #[command(subcommand)]
    cmd: Cmd,
}

/// `tenant/namespace`
#[derive(Clone, Debug)]
struct Scope {
    tenant: String,
    ns: String,
}

fn scope(s: &str) -> Result<Scope, String> {
    match s.split_once('/') {
        Some((t, n)) if !t.is_empty() && !n.is_empty() && !n.contains('/') => {
            Ok(Scope { tenant: t.into(), ns: n.into() })
        }
        _ => Err(format!("expected tenant/namespace, got {s:?}")),
    }
}

/// `partition:k=v;k=v`
fn meta_arg(s: &str) -> Result<(String, String), String> {
    s.split_once(':').map(|(p, kv)| (p.to_string(), kv.to_string())).ok_or_else(|| format!("expected partition:k=v;..., got {s:?}"))
}

#[derive(Clone, Copy, ValueEnum)]
enum Dir {
    Out,
    In,
    Both,
}

impl Dir {
    fn wire(self) -> &'static str {
        match self {
            Dir::Out => "OUT",
            Dir::In => "IN",
            Dir::Both => "BOTH",
        }
    }
}

#[derive(Subcommand)]
enum Cmd {
    /// Run a gateway node from a config file.
    Serve {
        #[arg(long, short)]
        config: PathBuf,
    },
    /// Upload a file (or stdin with `-`).
    Put {
        #[arg(value_parser = scope)]
        scope: Scope,
        path: String,
        file: PathBuf,
        /// Initial partition, `name:k=v;k=v`. Repeatable.
        #[arg(long = "meta", value_parser = meta_arg)]
        meta: Vec<(String, String)>,
    },
    /// Download an object to a file (or stdout).
    Get {
        #[arg(value_parser = scope)]
        scope: Scope,
        path: String,
        #[arg(long)]
        version: Option<u64>,
        #[arg(long, short)]
        out: Option<PathBuf>,
    },
    /// Show an object's system metadata and partitions.
    Head {
        #[arg(value_parser = scope)]
        scope: Scope,
        path: String,
    },
    /// Delete an object (writes a tombstone).
    Rm {
        #[arg(value_parser = scope)]
        scope: Scope,
        path: String,
    },
    Versions {
        #[arg(value_parser = scope)]
        scope: Scope,
        path: String,
    },
    /// Annotation partitions.
    #[command(subcommand)]
    Meta(MetaCmd),
    /// Metadata query, e.g. `CID=1234 AND doc_type=claim_form`.
    Query {
        #[arg(value_parser = scope)]
        scope: Scope,
        query: String,
        #[arg(long, default_value_t = 0)]
        offset: usize,
        #[arg(long)]
        limit: Option<usize>,
    },
    #[command(subcommand)]
    Graph(GraphCmd),
    /// Run a pipeline over a namespace's objects.
    Backfill {
        #[arg(value_parser = scope)]
        scope: Scope,
        #[arg(long)]
        pipeline: Option<String>,
        #[arg(long)]
        cursor: Option<String>,
        #[arg(long)]
        limit: Option<usize>,
    },
    /// Run the namespace pipeline over one object.
    RunPipeline {
        #[arg(value_parser = scope)]
        scope: Scope,
        path: String,
    },
    #[command(subcommand)]
    Tenant(TenantCmd),
    #[command(subcommand)]
    Ns(NsCmd),
    #[command(subcommand)]
    Principal(PrincipalCmd),
    /// Grant namespace rights to a user.
    Grant {
        account: String,
        #[arg(value_parser = scope)]
        scope: Scope,
        /// READ, WRITE, ANNOTATE, QUERY
        #[arg(required = true)]
        grants: Vec<String>,
    },
    /// Publish a data dictionary document.
    Dict { file: PathBuf },
    /// Publish a pipeline document.
    Pipeline { file: PathBuf },
    #[command(subcommand)]
    Admin(AdminCmd),
}

#[derive(Subcommand)]
enum MetaCmd {
    /// Replace a partition with the given `k=v` pairs.
    Put {
        #[arg(value_parser = scope)]
        scope: Scope,
        path: String,
        partition: String,
        pairs: Vec<String>,
    },
    Get {
        #[arg(value_parser = scope)]
        scope: Scope,
        path: String,
        partition: String,
    },
    Rm {
        #[arg(value_parser = scope)]
        scope: Scope,
        path: String,
        partition: String,
    },
}

#[derive(Args)]
struct EdgeFilter {
    #[arg(long, value_enum, default_value = "out")]
    direction: Dir,
    #[arg(long)]
    label: Option<String>,
}

#[derive(Subcommand)]
enum GraphCmd {
    Neighbors {
        #[arg(value_parser = scope)]
        scope: Scope,
        node: String,
        #[command(flatten)]
        filter: EdgeFilter,
    },
    Traverse {
        #[arg(value_parser = scope)]
        scope: Scope,
        start: String,
        #[arg(long)]
        depth: usize,
        #[arg(long)]
        min_weight: Option<f64>,
        #[command(flatten)]
        filter: EdgeFilter,
    },
    Pagerank {
        #[arg(value_parser = scope)]
        scope: Scope,
        #[arg(long, default_value_t = 0.85)]
        damping: f64,
        #[arg(long, default_value_t = 1e-10)]
        tolerance: f64,
        #[arg(long, default_value_t = 100)]
        max_iters: usize,
    },
    /// Nodes matching a query with neighbors matching each constraint.
    ClassQuery {
        #[arg(value_parser = scope)]
        scope: Scope,
        node: String,
        /// JSON constraint: {"direction":"OUT","label":..,"min_weight":..,"target":"query"}
        #[arg(long = "constraint")]
        constraints: Vec<String>,
    },
    /// Add a relation tag from one object to another.
    Relate {
        #[arg(value_parser = scope)]
        scope: Scope,
        from: String,
        to: String,
        #[arg(long, default_value = "RelTo")]
        label: String,
        #[arg(long, default_value_t = 1.0)]
        weight: f64,
    },
}

#[derive(Subcommand)]
enum TenantCmd {
    Create { tenant: String },
}

#[derive(Subcommand)]
enum NsCmd {
    Create {
        #[arg(value_parser = scope)]
        scope: Scope,
        #[arg(long)]
        no_versioning: bool,
        #[arg(long, default_value_t = 8)]
        max_partitions: usize,
        #[arg(long)]
        pipeline: Option<String>,
        /// Maximum number of live objects.
        #[arg(long)]
        quota: Option<u64>,
    },
    /// Attach (or with no pipeline, detach) a namespace pipeline.
    SetPipeline {
        #[arg(value_parser = scope)]
        scope: Scope,
        pipeline: Option<String>,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum RoleArg {
    SystemAdmin,
    TenantAdmin,
    User,
}

#[derive(Subcommand)]
enum PrincipalCmd {
    Add {
        account: String,
        #[arg(long)]
        secret: String,
        #[arg(long, value_enum)]
        role: RoleArg,
        #[arg(long)]
        tenant: Option<String>,
    },
}

#[derive(Subcommand)]
enum AdminCmd {
    Nodes,
    Repair,
    Rebuild,
    Gc,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(1)
        }
    }
}

fn print(v: &Value) -> Result<(), Box<dyn std::error::Error>> {
    let mut out = std::io::stdout().lock();
    serde_json::to_writer_pretty(&mut out, v)?;
    writeln!(out)?;
    Ok(())
}

fn pairs_json(pairs: &[String]) -> Result<Value, String> {
    let mut m = serde_json::Map::new();
    for p in pairs {
        let (k, v) = p.split_once('=').ok_or_else(|| format!("expected k=v, got {p:?}"))?;
        m.insert(k.to_string(), Value::String(v.to_string()));
    }
    Ok(Value::Object(m))
}

fn serve(config: PathBuf) -> Result<(), Box<dyn std::error::Error>> {
    tracing_subscriber::fmt()
        .with_env_filter(tracing_subscriber::EnvFilter::try_from_default_env().unwrap_or_else(|_| "info".into()))
        .init();
    let cfg = Config::load(&config)?;
    let store = cfg.open_store()?;
    let mut state = AppState::new(store);
    if let Some(s) = &cfg.spool_dir {
        std::fs::create_dir_all(s)?;
        state.spool = s.clone();
    }
    let rt = tokio::runtime::Runtime::new()?;
    rt.block_on(async move {
        let listener = tokio::net::TcpListener::bind(cfg.listen).await?;
        tracing::info!(addr = %cfg.listen, nodes = cfg.nodes.len(), "listening");
        rdos_gateway::serve(listener, state, async {
            let _ = tokio::signal::ctrl_c().await;
        })
        .await
    })?;
    Ok(())
}

fn run(cli: Cli) -> Result<(), Box<dyn std::error::Error>> {
    if let Cmd::Serve { config } = cli.cmd {
        return serve(config);
    }
    let c = Client::new(&cli.addr, cli.token.clone());
    let v: Value = match cli.cmd {
        Cmd::Serve { .. } => unreachable!("handled above"),
        Cmd::Put { scope, path, file, meta } => {
            let body: reqwest::blocking::Body = if file.as_os_str() == "-" {
                let mut buf = Vec::new();
                std::io::Read::read_to_end(&mut std::io::stdin(), &mut buf)?;
                buf.into()
            } else {
                std::fs::File::open(&file)?.into()
            };
            c.put_object(&scope.tenant, &scope.ns, &path, body, &meta)?
        }
        Cmd::Get { scope, path, version, out } => {
            let n = match out {
                Some(p) => c.download(&scope.tenant, &scope.ns, &path, version, &mut std::fs::File::create(p)?)?,
                None => c.download(&scope.tenant, &scope.ns, &path, version, &mut std::io::stdout().lock())?,
            };
            eprintln!("{n} bytes");
            return Ok(());
        }
        Cmd::Head { scope, path } => {
            let h = c.head_object(&scope.tenant, &scope.ns, &path)?;
            let m: serde_json::Map<String, Value> = h
                .iter()
                .filter(|(k, _)| k.as_str().starts_with("x-rdos-") || k.as_str() == "content-length")
                .map(|(k, v)| (k.to_string(), Value::String(v.to_str().unwrap_or("").to_string())))
                .collect();
            Value::Object(m)
        }
        Cmd::Rm { scope, path } => c.delete_object(&scope.tenant, &scope.ns, &path)?,
        Cmd::Versions { scope, path } => c.versions(&scope.tenant, &scope.ns, &path)?,
        Cmd::Meta(m) => match m {
            MetaCmd::Put { scope, path, partition, pairs } => {
                c.put_meta(&scope.tenant, &scope.ns, &path, &partition, &pairs_json(&pairs)?)?
            }
            MetaCmd::Get { scope, path, partition } => c.get_meta(&scope.tenant, &scope.ns, &path, &partition)?,
            MetaCmd::Rm { scope, path, partition } => c.delete_meta(&scope.tenant, &scope.ns, &path, &partition)?,
        },
        Cmd::Query { scope, query, offset, limit } => {
            c.query(&scope.tenant, &scope.ns, &json!({"query": query, "offset": offset, "limit": limit}))?
        }
        Cmd::Graph(g) => match g {
            GraphCmd::Neighbors { scope, node, filter } => c.graph(
                &scope.tenant,
                &scope.ns,
                "neighbors",
                &json!({"node": node, "direction": filter.direction.wire(), "label": filter.label}),
            )?,
            GraphCmd::Traverse { scope, start, depth, min_weight, filter } => c.graph(
                &scope.tenant,
                &scope.ns,
                "traverse",
                &json!({"start": start, "max_depth": depth, "direction": filter.direction.wire(),
                        "min_weight": min_weight, "label": filter.label}),
            )?,
            GraphCmd::Pagerank { scope, damping, tolerance, max_iters } => c.graph(
                &scope.tenant,
                &scope.ns,
                "pagerank",
                &json!({"damping": damping, "tolerance": tolerance, "max_iters": max_iters}),
            )?,
            GraphCmd::ClassQuery { scope, node, constraints } => {
                let cs = constraints.iter().map(|s| serde_json::from_str(s)).collect::<Result<Vec<Value>, _>>()?;
                c.graph(&scope.tenant, &scope.ns, "class-query", &json!({"node": node, "constraints": cs}))?
            }
            GraphCmd::Relate { scope, from, to, label, weight } => c.graph(
                &scope.tenant,
                &scope.ns,
                "edges",
                &json!({"from": from, "to": to, "label": label, "weight": weight}),
            )?,
        },
        Cmd::Backfill { scope, pipeline, cursor, limit } => c.pipeline(
            &scope.tenant,
            &scope.ns,
            "backfill",
            &json!({"pipeline": pipeline, "cursor": cursor, "limit": limit}),
        )?,
        Cmd::RunPipeline { scope, path } => c.pipeline(&scope.tenant, &scope.ns, "run", &json!({"path": path}))?,
        Cmd::Tenant(TenantCmd::Create { tenant }) => c.admin("tenants", &json!({"tenant": tenant}))?,
        Cmd::Ns(NsCmd::Create { scope, no_versioning, max_partitions, pipeline, quota }) => c.admin(
            "namespaces",
            &json!({"tenant": scope.tenant, "namespace": scope.ns, "versioning": !no_versioning,
                    "max_partitions": max_partitions, "pipeline": pipeline, "quota": quota}),
        )?,
        Cmd::Ns(NsCmd::SetPipeline { scope, pipeline }) => c.admin(
            "namespace-pipeline",
            &json!({"tenant": scope.tenant, "namespace": scope.ns, "pipeline": pipeline}),
        )?,
        Cmd::Principal(PrincipalCmd::Add { account, secret, role, tenant }) => {
            let role = match (role, tenant) {
                (RoleArg::SystemAdmin, _) => json!({"kind": "SYSTEM_ADMIN"}),
                (RoleArg::TenantAdmin, Some(t)) => json!({"kind": "TENANT_ADMIN", "tenant": t}),
                (RoleArg::User, Some(t)) => json!({"kind": "USER", "tenant": t}),
                (_, None) => return Err("--tenant is required for this role".into()),
            };
            c.admin("principals", &json!({"account": account, "role": role, "token": secret}))?
        }
        Cmd::Grant { account, scope, grants } => c.admin(
            "grants",
            &json!({"account": account, "tenant": scope.tenant, "namespace": scope.ns,
                    "grants": grants.iter().map(|g| g.to_ascii_uppercase()).collect::<Vec<_>>()}),
        )?,
        Cmd::Dict { file } => c.publish("dictionaries", std::fs::read(file)?)?,
        Cmd::Pipeline { file } => c.publish("pipelines", std::fs::read(file)?)?,
        Cmd::Admin(a) => match a {
            AdminCmd::Nodes => c.nodes()?,
            AdminCmd::Repair => c.admin("repair", &json!({}))?,
            AdminCmd::Rebuild => c.admin("rebuild", &json!({}))?,
            AdminCmd::Gc => c.admin("gc", &json!({}))?,
        },
    };
    print(&v)
}
