//! Single-threaded event loop driving stores, gossip tables and geo links
//! on a virtual clock.

use std::collections::{BTreeMap, BTreeSet};
use std::sync::Arc;

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use super::fixture::{node_layout, Fixture};
use super::scenario::{Check, CorruptMode, CorruptTarget, Event, Scenario, Seeding};
use super::trace::{ClientOp, MsgKind, ReadOutcome, Trace, TraceKind};
use crate::cluster::{DetectorConfig, MembershipDigest, MembershipTable, NodeId, NodeInfo, NodeState};
use crate::error::{Error, Result};
use crate::model::{content_digest, MetadataPartition, NamespaceId, ObjectUri, VersionId};
use crate::storage::disk::{blob_path, sidecar_path};
use crate::storage::{geo_ship, BlobSource, Disk, MemDisk, Store, StoreConfig};
use crate::tenancy::Principal;

struct SimNode {
    domain: String,
    up: bool,
    table: MembershipTable,
}

struct SimCluster {
    id: u32,
    fx: Fixture,
    actor: Principal,
    ns: NamespaceId,
    nodes: BTreeMap<NodeId, SimNode>,
    /// name → sides; a message crossing sides of any active partition drops.
    partitions: BTreeMap<String, Vec<BTreeSet<NodeId>>>,
    epoch_open: bool,
    /// Acknowledged puts: path → (version, digest).
    acked: BTreeMap<String, Vec<(u64, String)>>,
}

impl SimCluster {
    fn store(&self) -> &Store {
        &self.fx.store
    }

    fn uri(&self, path: &str) -> Result<ObjectUri> {
        self.ns.uri(path)
    }

    fn blocked(&self, a: NodeId, b: NodeId) -> bool {
        self.partitions.values().any(|sides| {
            let sa = sides.iter().position(|s| s.contains(&a));
            let sb = sides.iter().position(|s| s.contains(&b));
            matches!((sa, sb), (Some(x), Some(y)) if x != y)
        })
    }

    fn converged(&self) -> bool {
        let all: BTreeSet<NodeId> = self.nodes.keys().copied().collect();
        let live: Vec<NodeId> = self.nodes.iter().filter(|(_, n)| n.up).map(|(id, _)| *id).collect();
        self.nodes.values().filter(|n| n.up).all(|n| {
            n.table.node_ids().into_iter().collect::<BTreeSet<_>>() == all
                && live.iter().all(|id| n.table.get(*id).is_some_and(|e| e.state == NodeState::Active))
        })
    }

    fn fresh_table(&self, id: NodeId) -> MembershipTable {
        let info = |id: NodeId, dom: &str| NodeInfo::new(id, format!("sim-{}-{}", self.id, id.0), dom.to_string());
        let mut t = MembershipTable::new(info(id, &self.nodes[&id].domain));
        for (peer, n) in &self.nodes {
            t.add_seed(info(*peer, &n.domain));
        }
        t
    }
}

struct Msg {
    cluster: usize,
    id: u64,
    from: NodeId,
    to: NodeId,
    kind: MsgKind,
    digest: MembershipDigest,
}

struct CrashPlan {
    down: Vec<NodeId>,
    restart_at: u64,
}

pub struct World {
    pub sc: Scenario,
    tick: u64,
    clusters: Vec<SimCluster>,
    queue: BTreeMap<(u64, u64), Msg>,
    next_msg: u64,
    net_rng: ChaCha8Rng,
    gossip_rng: ChaCha8Rng,
    work_rng: ChaCha8Rng,
    geo_up: bool,
    /// cursors[i] = last entry of cluster i shipped to the other one
    cursors: [u64; 2],
    probe_round: u64,
    crash_plan: Option<CrashPlan>,
    pub trace: Trace,
}

fn rng(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut r = ChaCha8Rng::seed_from_u64(seed);
    r.set_stream(stream);
    r
}

fn code(e: &Error) -> String {
    e.code().to_string()
}

impl World {
    pub fn new(sc: Scenario, seed: u64) -> Result<World> {
        sc.validate()?;
        let (tenant, namespace) = sc.namespace.split_once('/').expect("validated");
        let layout = node_layout(sc.nodes, sc.fault_domains);
        let mut clusters = Vec::new();
        let mut trace = Trace::default();
        trace.push(
            0,
            TraceKind::Init {
                scenario: sc.name.clone(),
                seed,
                clusters: sc.clusters,
                nodes: layout.clone(),
                replicas: sc.replicas,
            },
        );
        for id in 1..=sc.clusters {
            let cfg = StoreConfig { cluster: id, replicas: sc.replicas, ..Default::default() };
            let fx = Fixture::new(cfg, &layout);
            let (ns, actor) = fx.namespace(tenant, namespace);
            let mut c = SimCluster {
                id,
                fx,
                actor,
                ns,
                nodes: BTreeMap::new(),
                partitions: BTreeMap::new(),
                epoch_open: false,
                acked: BTreeMap::new(),
            };
            for (nid, dom) in &layout {
                let placeholder = MembershipTable::new(NodeInfo::new(*nid, "", dom.clone()));
                c.nodes.insert(*nid, SimNode { domain: dom.clone(), up: true, table: placeholder });
            }
            if sc.seeding == Seeding::Full {
                for nid in layout.iter().map(|(n, _)| *n) {
                    let t = c.fresh_table(nid);
                    c.nodes.get_mut(&nid).expect("just inserted").table = t;
                }
            } else if let Some((intro, dom)) = layout.first().cloned() {
                for (nid, _) in layout.iter().skip(1) {
                    let t = &mut c.nodes.get_mut(nid).expect("just inserted").table;
                    t.add_seed(NodeInfo::new(intro, String::new(), dom.clone()));
                }
            }
            let first = c.nodes.values().next().map(|n| n.table.clone());
            c.fx.store.set_view(first.as_ref());
            clusters.push(c);
        }
        let introducer = sc.seeding == Seeding::Introducer;
        let mut w = World {
            sc,
            tick: 0,
            clusters,
            queue: BTreeMap::new(),
            next_msg: 0,
            net_rng: rng(seed, 1),
            gossip_rng: rng(seed, 2),
            work_rng: rng(seed, 3),
            geo_up: true,
            cursors: [0, 0],
            probe_round: 0,
            crash_plan: None,
            trace,
        };
        if introducer {
            for ci in 0..w.clusters.len() {
                w.open_epoch(ci);
            }
        }
        Ok(w)
    }

    fn cluster(&self, c: u32) -> usize {
        (c - 1) as usize
    }

    fn emit(&mut self, k: TraceKind) {
        self.trace.push(self.tick, k);
    }

    // ---- network and background tasks ----

    fn send(&mut self, ci: usize, from: NodeId, to: NodeId, kind: MsgKind, digest: MembershipDigest) {
        let id = self.next_msg;
        self.next_msg += 1;
        let cluster = self.clusters[ci].id;
        self.emit(TraceKind::Send { cluster, id, from, to, kind });
        if self.sc.network.drop > 0.0 && self.net_rng.gen_bool(self.sc.network.drop) {
            self.emit(TraceKind::Drop { cluster, id, reason: "loss".into() });
            return;
        }
        let (lo, hi) = self.sc.network.delay;
        let at = self.tick + self.net_rng.gen_range(lo..=hi);
        self.queue.insert((at, id), Msg { cluster: ci, id, from, to, kind, digest });
    }

    fn deliver_due(&mut self) {
        while let Some(entry) = self.queue.first_entry() {
            if entry.key().0 > self.tick {
                break;
            }
            let m = entry.remove();
            let c = &self.clusters[m.cluster];
            let cluster = c.id;
            let reason = match c.nodes.get(&m.to) {
                Some(n) if !n.up => Some("down"),
                None => Some("unknown"),
                _ if c.blocked(m.from, m.to) => Some("partition"),
                _ => None,
            };
            if let Some(r) = reason {
                self.emit(TraceKind::Drop { cluster, id: m.id, reason: r.into() });
                continue;
            }
            self.emit(TraceKind::Deliver { cluster, id: m.id });
            let node = self.clusters[m.cluster].nodes.get_mut(&m.to).expect("checked");
            let transitions = node.table.merge_digest(&m.digest);
            let reply = (m.kind == MsgKind::Push).then(|| node.table.digest());
            for t in transitions {
                self.emit(TraceKind::Transition { cluster, observer: m.to, node: t.node, from: t.from, to: t.to });
            }
            if let Some(d) = reply {
                self.send(m.cluster, m.to, m.from, MsgKind::Reply, d);
            }
        }
    }

    fn gossip_round(&mut self) {
        let fanout = self.sc.gossip.fanout;
        let det = DetectorConfig { t_suspect: self.sc.gossip.t_suspect, t_fail: self.sc.gossip.t_fail };
        for ci in 0..self.clusters.len() {
            let ids: Vec<NodeId> = self.clusters[ci].nodes.iter().filter(|(_, n)| n.up).map(|(id, _)| *id).collect();
            for id in &ids {
                let load = self.clusters[ci].fx.disks.get(id).map(|d| d.bytes_used() as f64).unwrap_or(0.0);
                let node = self.clusters[ci].nodes.get_mut(id).expect("live id");
                node.table.set_local_load(load);
                let out = node.table.gossip_tick(self.tick, &mut self.gossip_rng, fanout);
                for (peer, d) in out {
                    self.send(ci, *id, peer, MsgKind::Push, d);
                }
            }
        }
        self.deliver_due();
        for ci in 0..self.clusters.len() {
            let cluster = self.clusters[ci].id;
            let ids: Vec<NodeId> = self.clusters[ci].nodes.iter().filter(|(_, n)| n.up).map(|(id, _)| *id).collect();
            for id in ids {
                let ts = self.clusters[ci].nodes.get_mut(&id).expect("live id").table.detect_failures(self.tick, det);
                for t in ts {
                    self.emit(TraceKind::Transition { cluster, observer: id, node: t.node, from: t.from, to: t.to });
                }
            }
            let c = &self.clusters[ci];
            // the lowest live node coordinates client traffic
            if let Some(n) = c.nodes.values().find(|n| n.up) {
                c.fx.store.set_view(Some(&n.table));
            }
            if c.epoch_open && c.converged() {
                self.clusters[ci].epoch_open = false;
                self.emit(TraceKind::GossipConverged { cluster });
            }
        }
    }

    fn open_epoch(&mut self, ci: usize) {
        let c = &mut self.clusters[ci];
        c.epoch_open = true;
        let (cluster, members) = (c.id, c.nodes.len());
        self.emit(TraceKind::GossipEpoch { cluster, members });
    }

    fn repair(&mut self, ci: usize) {
        let r = self.clusters[ci].store().repair();
        let cluster = self.clusters[ci].id;
        if r.files_restored + r.replicas_added + r.lost.len() > 0 {
            self.emit(TraceKind::Repair { cluster, restored: r.files_restored, added: r.replicas_added, lost: r.lost.len() });
        }
    }

    fn ship(&mut self) {
        if self.clusters.len() < 2 {
            return;
        }
        for (from, to) in [(0usize, 1usize), (1, 0)] {
            let (fid, tid) = (self.clusters[from].id, self.clusters[to].id);
            if !self.geo_up {
                self.emit(TraceKind::ShipFailed { from: fid, to: tid, code: "REMOTE_UNAVAILABLE".into() });
                continue;
            }
            let before = self.cursors[from];
            match geo_ship(self.clusters[from].store(), before, self.clusters[to].store()) {
                Ok(c) if c != before => {
                    self.cursors[from] = c;
                    self.emit(TraceKind::Ship { from: fid, to: tid, entries: (c - before) as usize, cursor: c });
                }
                Ok(_) => {}
                Err(e) => self.emit(TraceKind::ShipFailed { from: fid, to: tid, code: code(&e) }),
            }
        }
    }

    fn advance(&mut self, n: u64) {
        for _ in 0..n {
            self.tick += 1;
            for c in &self.clusters {
                c.fx.clock.set(1_000 + self.tick * 1_000);
            }
            self.gossip_round();
            if self.sc.repair_interval > 0 && self.tick % self.sc.repair_interval == 0 {
                for ci in 0..self.clusters.len() {
                    self.repair(ci);
                }
            }
            if self.sc.geo_interval > 0 && self.tick % self.sc.geo_interval == 0 {
                self.ship();
            }
            self.crash_controller_tick();
        }
    }

    // ---- client operations ----

    fn ack(&mut self, ci: usize, op: ClientOp, path: &str, res: Result<(u64, Option<String>)>) {
        let cluster = self.clusters[ci].id;
        match res {
            Ok((version, digest)) => {
                if let (ClientOp::Put, Some(d)) = (op, &digest) {
                    self.clusters[ci].acked.entry(path.to_string()).or_default().push((version, d.clone()));
                }
                self.emit(TraceKind::Ack { cluster, op, path: path.into(), version, digest });
            }
            Err(e) => self.emit(TraceKind::Reject { cluster, op, path: path.into(), code: code(&e) }),
        }
    }

    fn put(&mut self, ci: usize, path: &str, body: Vec<u8>, partitions: Vec<MetadataPartition>) {
        let c = &self.clusters[ci];
        let res = c.uri(path).and_then(|u| {
            let v = c.store().put_object(&c.actor, &u, &BlobSource::bytes(&body), partitions)?;
            Ok((v.0, Some(content_digest(&body))))
        });
        self.ack(ci, ClientOp::Put, path, res);
    }

    fn read(&mut self, ci: usize, path: &str, version: Option<u64>) -> ReadOutcome {
        let c = &self.clusters[ci];
        let res = c.uri(path).and_then(|u| c.store().get_object(&c.actor, &u, version.map(VersionId)));
        match res {
            Ok((rec, bytes)) => ReadOutcome::Ok { version: rec.version().0, digest: content_digest(&bytes) },
            Err(e) => ReadOutcome::Err { code: code(&e) },
        }
    }

    fn get(&mut self, ci: usize, path: &str, version: Option<u64>) {
        let outcome = self.read(ci, path, version);
        let cluster = self.clusters[ci].id;
        self.emit(TraceKind::Read { cluster, path: path.into(), version, outcome });
    }

    fn annotate(&mut self, ci: usize, path: &str, partition: MetadataPartition) {
        let c = &self.clusters[ci];
        let res = c.uri(path).and_then(|u| c.store().put_annotation(&c.actor, &u, partition)).map(|r| (r.version().0, None));
        self.ack(ci, ClientOp::Annotate, path, res);
    }

    fn unannotate(&mut self, ci: usize, path: &str, name: &str) {
        let c = &self.clusters[ci];
        let res = c.uri(path).and_then(|u| c.store().delete_annotation(&c.actor, &u, name)).map(|r| (r.version().0, None));
        self.ack(ci, ClientOp::Unannotate, path, res);
    }

    fn delete(&mut self, ci: usize, path: &str) {
        let c = &self.clusters[ci];
        let res = c.uri(path).and_then(|u| c.store().delete_object(&c.actor, &u)).map(|v| (v.0, None));
        self.ack(ci, ClientOp::Delete, path, res);
    }

    fn relate(&mut self, ci: usize, from: &str, to: &str, label: &str, weight: f64) {
        let c = &self.clusters[ci];
        let res = c
            .uri(from)
            .and_then(|f| Ok((f, c.uri(to)?)))
            .and_then(|(f, t)| c.store().put_relation(&c.actor, &f, &t, label, weight))
            .map(|r| (r.version().0, None));
        self.ack(ci, ClientOp::Relate, from, res);
    }

    // ---- faults ----

    fn crash(&mut self, ci: usize, node: NodeId, wipe: bool) -> Result<()> {
        let c = &mut self.clusters[ci];
        let n = c.nodes.get_mut(&node).ok_or_else(|| Error::Scenario(format!("no node {node}")))?;
        n.up = false;
        c.fx.store.set_node_up(node, false);
        if wipe {
            c.fx.store.wipe_node(node)?;
        }
        let cluster = c.id;
        self.emit(TraceKind::Crash { cluster, node, wipe });
        Ok(())
    }

    fn restart(&mut self, ci: usize, node: NodeId) -> Result<()> {
        let c = &mut self.clusters[ci];
        if !c.nodes.contains_key(&node) {
            return Err(Error::Scenario(format!("no node {node}")));
        }
        let t = c.fresh_table(node);
        let n = c.nodes.get_mut(&node).expect("checked");
        n.up = true;
        n.table = t;
        c.fx.store.set_node_up(node, true);
        let cluster = c.id;
        self.emit(TraceKind::Restart { cluster, node });
        self.open_epoch(ci);
        self.repair(ci);
        Ok(())
    }

    fn join(&mut self, ci: usize, node: NodeId, domain: &str) -> Result<()> {
        let c = &mut self.clusters[ci];
        if c.nodes.contains_key(&node) {
            return Err(Error::Scenario(format!("node {node} already present")));
        }
        let disk = Arc::new(MemDisk::new());
        c.fx.store.add_node(node, domain, disk.clone());
        c.fx.disks.insert(node, disk);
        // a joiner knows only the lowest-id node
        let seed = *c.nodes.keys().next().ok_or_else(|| Error::Scenario("join into empty cluster".into()))?;
        let mut t = MembershipTable::new(NodeInfo::new(node, format!("sim-{}-{}", c.id, node.0), domain));
        t.add_seed(NodeInfo::new(seed, format!("sim-{}-{}", c.id, seed.0), c.nodes[&seed].domain.clone()));
        c.nodes.insert(node, SimNode { domain: domain.to_string(), up: true, table: t });
        let cluster = c.id;
        self.emit(TraceKind::Join { cluster, node, fault_domain: domain.to_string() });
        self.open_epoch(ci);
        Ok(())
    }

    fn corrupt(&mut self, ci: usize, path: &str, version: Option<u64>, replica: usize, target: CorruptTarget, mode: CorruptMode) -> Result<()> {
        let c = &self.clusters[ci];
        let uri = c.uri(path)?;
        let db = c.store().refdb();
        let entry = db.get(&uri).ok_or_else(|| Error::Scenario(format!("corrupt: {path} was never stored")))?;
        let v = version.map(VersionId).unwrap_or(entry.latest);
        let vref = entry.versions.get(&v).ok_or_else(|| Error::Scenario(format!("corrupt: no version {v} of {path}")))?;
        let node = *vref
            .replicas
            .iter()
            .nth(replica)
            .ok_or_else(|| Error::Scenario(format!("corrupt: {path} has no replica #{replica}")))?;
        let file = match target {
            CorruptTarget::Blob => blob_path(&vref.digest),
            CorruptTarget::Sidecar => sidecar_path(uri.tenant(), uri.namespace(), uri.hash64(), v.0),
        };
        let disk = c.fx.disks.get(&node).ok_or_else(|| Error::Scenario(format!("no disk for {node}")))?;
        let mut bytes = disk.read(&file)?;
        match mode {
            CorruptMode::Flip if !bytes.is_empty() => bytes[0] ^= 0xff,
            CorruptMode::Flip => bytes.push(0),
            CorruptMode::Truncate => bytes.truncate(bytes.len() / 2),
        }
        disk.write(&file, &bytes)?;
        let cluster = c.id;
        self.emit(TraceKind::Corrupt { cluster, node, file });
        Ok(())
    }

    /// Drives restarts for crashes started by a workload.
    fn crash_controller_tick(&mut self) {
        let due = matches!(&self.crash_plan, Some(p) if p.restart_at <= self.tick);
        if due {
            let plan = self.crash_plan.take().expect("checked");
            for n in plan.down {
                // cluster 1 only; workloads with crashes run there
                let _ = self.restart(0, n);
            }
        }
    }

    fn maybe_crash(&mut self, ci: usize) {
        if self.crash_plan.is_some() || !self.work_rng.gen_bool(0.05) {
            return;
        }
        let live: Vec<NodeId> = self.clusters[ci].nodes.iter().filter(|(_, n)| n.up).map(|(id, _)| *id).collect();
        let count = if self.work_rng.gen_bool(0.5) { 1 } else { 2 };
        let count = count.min(self.sc.replicas.saturating_sub(1)).min(live.len().saturating_sub(1));
        if count == 0 {
            return;
        }
        let mut down = Vec::new();
        let mut pool = live;
        for _ in 0..count {
            let i = self.work_rng.gen_range(0..pool.len());
            down.push(pool.remove(i));
        }
        down.sort();
        for n in &down {
            let wipe = self.work_rng.gen_bool(0.5);
            let _ = self.crash(ci, *n, wipe);
        }
        let restart_at = self.tick + self.work_rng.gen_range(5..=25);
        self.crash_plan = Some(CrashPlan { down, restart_at });
    }

    fn workload(&mut self, ci: usize, ops: usize, paths: usize, crashes: bool) {
        let paths = paths.max(1);
        for _ in 0..ops {
            if crashes && ci == 0 {
                self.maybe_crash(ci);
            }
            let path = format!("w/{:04}", self.work_rng.gen_range(0..paths));
            let roll = self.work_rng.gen_range(0..100);
            match roll {
                0..=44 => {
                    let size = self.work_rng.gen_range(1..=256);
                    let mut body = vec![0u8; size];
                    self.work_rng.fill(&mut body[..]);
                    let parts = if self.work_rng.gen_bool(0.3) {
                        vec![MetadataPartition::new("init").with("k", self.work_rng.gen_range(0..10).to_string())]
                    } else {
                        vec![]
                    };
                    self.put(ci, &path, body, parts);
                }
                45..=59 => {
                    let p = MetadataPartition::new(format!("m{}", self.work_rng.gen_range(0..3)))
                        .with("v", self.work_rng.gen_range(0..100).to_string());
                    self.annotate(ci, &path, p);
                }
                60..=64 => {
                    let name = format!("m{}", self.work_rng.gen_range(0..3));
                    self.unannotate(ci, &path, &name);
                }
                65..=69 => self.delete(ci, &path),
                70..=74 => {
                    let to = format!("w/{:04}", self.work_rng.gen_range(0..paths));
                    let w = self.work_rng.gen_range(0..=10) as f64 / 10.0;
                    self.relate(ci, &path, &to, "RelTo", w);
                }
                _ => self.get(ci, &path, None),
            }
            if self.work_rng.gen_bool(0.5) {
                self.advance(1);
            }
        }
    }

    // ---- probes ----

    fn probe(&mut self) {
        let checks: BTreeSet<Check> = self.sc.checks.iter().copied().collect();
        if checks.contains(&Check::GeoConvergence) && self.clusters.len() == 2 {
            // drain both logs before comparing
            for _ in 0..4 {
                self.ship();
            }
            self.probe_round += 1;
            for ci in 0..2 {
                let (digest, live) = geo_summary(self.clusters[ci].store());
                let cluster = self.clusters[ci].id;
                self.emit(TraceKind::ProbeGeo { round: self.probe_round, cluster, digest, live });
            }
        }
        for ci in 0..self.clusters.len() {
            let cluster = self.clusters[ci].id;
            if checks.contains(&Check::Durability) {
                let acked: Vec<(String, u64, String)> = self.clusters[ci]
                    .acked
                    .iter()
                    .flat_map(|(p, vs)| vs.iter().map(move |(v, d)| (p.clone(), *v, d.clone())))
                    .collect();
                for (path, version, expected) in acked {
                    let outcome = self.read(ci, &path, Some(version));
                    self.emit(TraceKind::ProbeRead { cluster, path, version, expected, outcome });
                }
            }
            if checks.contains(&Check::ReadYourWrites) {
                let paths: Vec<String> = self.clusters[ci].acked.keys().cloned().collect();
                for p in paths {
                    self.get(ci, &p, None);
                }
            }
            if checks.contains(&Check::ScavengerEquivalence) {
                let store = self.clusters[ci].store();
                let live = store.refdb();
                let (scanned, report) = store.scavenge_snapshot();
                let mut differing: Vec<String> = Vec::new();
                let uris: BTreeSet<&ObjectUri> = live.iter().map(|(u, _)| u).chain(scanned.iter().map(|(u, _)| u)).collect();
                for u in uris {
                    if live.get(u) != scanned.get(u) {
                        differing.push(u.to_string());
                    }
                }
                self.emit(TraceKind::ProbeScavenge {
                    cluster,
                    equal: differing.is_empty(),
                    differing,
                    corrupt: report.corrupt.len(),
                    skipped: report.skipped_nodes,
                });
            }
        }
    }

    // ---- script ----

    pub fn apply(&mut self, ev: &Event) -> Result<()> {
        match ev {
            Event::Put { cluster, path, body, size, partitions } => {
                let ci = self.cluster(*cluster);
                let bytes = match (body, size) {
                    (Some(b), _) => b.clone().into_bytes(),
                    (None, Some(n)) => {
                        let mut b = vec![0u8; *n];
                        self.work_rng.fill(&mut b[..]);
                        b
                    }
                    (None, None) => format!("{path} @ {}", self.tick).into_bytes(),
                };
                let parts = partitions.iter().map(|(n, kv)| MetadataPartition { name: n.clone(), pairs: kv.clone() }).collect();
                self.put(ci, path, bytes, parts);
            }
            Event::Get { cluster, path, version } => {
                let ci = self.cluster(*cluster);
                self.get(ci, path, *version);
            }
            Event::Annotate { cluster, path, partition, pairs } => {
                let ci = self.cluster(*cluster);
                self.annotate(ci, path, MetadataPartition { name: partition.clone(), pairs: pairs.clone() });
            }
            Event::Unannotate { cluster, path, partition } => {
                let ci = self.cluster(*cluster);
                self.unannotate(ci, path, partition);
            }
            Event::Delete { cluster, path } => {
                let ci = self.cluster(*cluster);
                self.delete(ci, path);
            }
            Event::Relate { cluster, from, to, label, weight } => {
                let ci = self.cluster(*cluster);
                self.relate(ci, from, to, label.as_deref().unwrap_or(crate::model::DEFAULT_RELATION_LABEL), weight.unwrap_or(1.0));
            }
            Event::Crash { cluster, node, wipe } => {
                let ci = self.cluster(*cluster);
                self.crash(ci, NodeId(*node), *wipe)?;
            }
            Event::CrashReplicas { cluster, path, count, wipe } => {
                let ci = self.cluster(*cluster);
                let c = &self.clusters[ci];
                let uri = c.uri(path)?;
                let latest = c
                    .store()
                    .refdb()
                    .get(&uri)
                    .map(|e| e.latest)
                    .ok_or_else(|| Error::Scenario(format!("crash_replicas: {path} was never stored")))?;
                let reps: Vec<NodeId> = c.store().replicas_of(&uri, latest).into_iter().take(*count).collect();
                if reps.len() < *count {
                    return Err(Error::Scenario(format!("crash_replicas: {path} has only {} replicas", reps.len())));
                }
                for n in reps {
                    self.crash(ci, n, *wipe)?;
                }
            }
            Event::Restart { cluster, node } => {
                let ci = self.cluster(*cluster);
                self.restart(ci, NodeId(*node))?;
            }
            Event::Join { cluster, node, fault_domain } => {
                let ci = self.cluster(*cluster);
                self.join(ci, NodeId(*node), fault_domain)?;
            }
            Event::Partition { cluster, name, sides } => {
                let ci = self.cluster(*cluster);
                let sides = sides.iter().map(|s| s.iter().map(|n| NodeId(*n)).collect()).collect();
                self.clusters[ci].partitions.insert(name.clone(), sides);
                let cluster = self.clusters[ci].id;
                self.emit(TraceKind::Partition { cluster, name: name.clone() });
            }
            Event::Heal { name } => {
                let mut any = false;
                for c in &mut self.clusters {
                    any |= c.partitions.remove(name).is_some();
                }
                if !any {
                    return Err(Error::Scenario(format!("heal: no partition named {name:?}")));
                }
                for ci in 0..self.clusters.len() {
                    self.open_epoch(ci);
                }
                self.emit(TraceKind::Heal { name: name.clone() });
            }
            Event::CutGeo => {
                self.geo_up = false;
                self.emit(TraceKind::GeoCut);
            }
            Event::HealGeo => {
                self.geo_up = true;
                self.emit(TraceKind::GeoHeal);
            }
            Event::Corrupt { cluster, path, version, replica, target, mode } => {
                let ci = self.cluster(*cluster);
                self.corrupt(ci, path, *version, *replica, *target, *mode)?;
            }
            Event::Tick { n } => self.advance(*n),
            Event::Repair { cluster } => {
                let ci = self.cluster(*cluster);
                self.repair(ci);
            }
            Event::Rebuild { cluster } => {
                let ci = self.cluster(*cluster);
                let r = self.clusters[ci].store().rebuild();
                let cluster = self.clusters[ci].id;
                self.emit(TraceKind::Rebuild { cluster, corrupt: r.corrupt.len(), orphaned: r.orphaned.len() });
            }
            Event::Ship => self.ship(),
            Event::Workload { cluster, ops, paths, crashes } => {
                let ci = self.cluster(*cluster);
                self.workload(ci, *ops, *paths, *crashes);
            }
            Event::Probe => self.probe(),
        }
        Ok(())
    }

    pub fn store(&self, cluster: u32) -> &Store {
        self.clusters[self.cluster(cluster)].store()
    }

    pub fn tick(&self) -> u64 {
        self.tick
    }

    /// The membership table held by `node` in `cluster`.
    pub fn table(&self, cluster: u32, node: NodeId) -> Option<&MembershipTable> {
        self.clusters.get((cluster as usize).wrapping_sub(1)).and_then(|c| c.nodes.get(&node)).map(|n| &n.table)
    }

    /// Run the whole script, then a final probe for the scenario's checks.
    pub fn run(mut self) -> Result<(Trace, World)> {
        let script = std::mem::take(&mut self.sc.script);
        for (i, ev) in script.iter().enumerate() {
            self.apply(ev).map_err(|e| match e {
                Error::Scenario(m) => Error::Scenario(format!("script[{i}]: {m}")),
                other => other,
            })?;
        }
        self.sc.script = script;
        if !self.sc.checks.is_empty() {
            self.probe();
        }
        self.emit(TraceKind::End);
        let trace = std::mem::take(&mut self.trace);
        Ok((trace, self))
    }
}

#[derive(Serialize)]
struct GeoObject<'a> {
    digest: &'a str,
    partitions: BTreeMap<&'a str, &'a BTreeMap<String, String>>,
    relations: Vec<(&'a str, &'a str, f64)>,
}

/// Digest of a cluster's live objects and their metadata, for comparing
/// clusters. Version numbers are local and excluded.
pub fn geo_summary(store: &Store) -> (String, usize) {
    let db = store.refdb();
    let mut out: BTreeMap<&str, GeoObject<'_>> = BTreeMap::new();
    for (u, e) in db.iter().filter(|(_, e)| e.is_live()) {
        let r = &e.record;
        let mut relations: Vec<(&str, &str, f64)> =
            r.relations.iter().map(|t| (t.label.as_str(), t.target.as_str(), t.weight)).collect();
        relations.sort_by(|a, b| (a.0, a.1).cmp(&(b.0, b.1)));
        out.insert(
            u.as_str(),
            GeoObject {
                digest: &r.system.content_digest,
                partitions: r.partitions.iter().map(|(n, p)| (n.as_str(), &p.pairs)).collect(),
                relations,
            },
        );
    }
    let bytes = crate::canonical::to_vec(&out).expect("summary serializes");
    (content_digest(&bytes), out.len())
}

/// Run `sc` with `seed` (overriding the scenario's own).
pub fn run_scenario_seeded(sc: &Scenario, seed: u64) -> Result<Trace> {
    let mut sc = sc.clone();
    sc.seed = seed;
    Ok(World::new(sc, seed)?.run()?.0)
}

pub fn run_scenario(sc: &Scenario) -> Result<Trace> {
    run_scenario_seeded(sc, sc.seed)
}
