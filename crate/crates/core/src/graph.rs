//! Namespace-scoped directed weighted graph over object URIs.
//!
//! The graph is a derived index: the durable copy of every edge is the
//! relation tag on its source object's record.

use std::collections::{BTreeMap, BTreeSet, VecDeque};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::index::QueryExpr;
use crate::model::{NamespaceId, ObjectUri, RelationTag};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum Direction {
    Out,
    In,
    Both,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Edge {
    pub from: ObjectUri,
    pub to: ObjectUri,
    pub label: String,
    pub weight: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Reached {
    pub node: ObjectUri,
    pub depth: usize,
    /// Product of edge weights along the first (shallowest) path found.
    pub weight: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CentralityScores {
    pub scores: BTreeMap<ObjectUri, f64>,
    pub iterations: usize,
    pub converged: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EdgeConstraint {
    pub direction: Direction,
    #[serde(default)]
    pub label: Option<String>,
    #[serde(default)]
    pub min_weight: Option<f64>,
    pub target: QueryExpr,
}

pub const PAGERANK_DAMPING: f64 = 0.85;
pub const PAGERANK_TOLERANCE: f64 = 1e-9;
pub const PAGERANK_MAX_ITERS: usize = 200;

type Adjacency = BTreeMap<ObjectUri, BTreeMap<(String, ObjectUri), f64>>;

#[derive(Clone, Debug, PartialEq)]
pub struct RelationGraph {
    namespace: NamespaceId,
    registered: BTreeSet<ObjectUri>,
    out: Adjacency,
    inc: Adjacency,
}

pub fn validate_edge(ns: &NamespaceId, from: &ObjectUri, to: &ObjectUri, label: &str, weight: f64) -> Result<()> {
    if from.tenant() != ns.tenant || from.namespace() != ns.namespace || !from.same_namespace(to) {
        return Err(Error::CrossNamespace(format!("{from} -> {to}")));
    }
    if from == to {
        return Err(Error::SelfLoop(from.to_string()));
    }
    if !(0.0..=1.0).contains(&weight) {
        return Err(Error::WeightOutOfRange(weight));
    }
    if label.is_empty() || label.len() > 256 || label.chars().any(|c| c.is_control()) {
        return Err(Error::InvalidName(format!("edge label {label:?}")));
    }
    Ok(())
}

impl RelationGraph {
    pub fn new(namespace: NamespaceId) -> Self {
        Self { namespace, registered: BTreeSet::new(), out: BTreeMap::new(), inc: BTreeMap::new() }
    }

    pub fn namespace(&self) -> &NamespaceId {
        &self.namespace
    }

    pub fn register_node(&mut self, uri: ObjectUri) {
        self.registered.insert(uri);
    }

    pub fn unregister_node(&mut self, uri: &ObjectUri) {
        self.registered.remove(uri);
    }

    pub fn upsert_edge(&mut self, from: &ObjectUri, to: &ObjectUri, label: &str, weight: f64) -> Result<()> {
        validate_edge(&self.namespace, from, to, label, weight)?;
        self.out.entry(from.clone()).or_default().insert((label.to_string(), to.clone()), weight);
        self.inc.entry(to.clone()).or_default().insert((label.to_string(), from.clone()), weight);
        Ok(())
    }

    pub fn remove_edge(&mut self, from: &ObjectUri, to: &ObjectUri, label: &str) {
        let key_out = (label.to_string(), to.clone());
        if let Some(m) = self.out.get_mut(from) {
            m.remove(&key_out);
            if m.is_empty() {
                self.out.remove(from);
            }
        }
        let key_in = (label.to_string(), from.clone());
        if let Some(m) = self.inc.get_mut(to) {
            m.remove(&key_in);
            if m.is_empty() {
                self.inc.remove(to);
            }
        }
    }

    pub fn remove_out_edges(&mut self, from: &ObjectUri) {
        let keys: Vec<(String, ObjectUri)> = self.out.get(from).map(|m| m.keys().cloned().collect()).unwrap_or_default();
        for (label, to) in keys {
            self.remove_edge(from, &to, &label);
        }
    }

    /// Replace every outgoing edge of `from` with `tags` (invalid tags are skipped).
    pub fn set_out_edges(&mut self, from: &ObjectUri, tags: &[RelationTag]) {
        self.remove_out_edges(from);
        for t in tags {
            let _ = self.upsert_edge(from, &t.target, &t.label, t.weight);
        }
    }

    /// Registered nodes plus every edge endpoint.
    pub fn nodes(&self) -> BTreeSet<ObjectUri> {
        let mut n = self.registered.clone();
        n.extend(self.out.keys().cloned());
        n.extend(self.inc.keys().cloned());
        n
    }

    pub fn edge_count(&self) -> usize {
        self.out.values().map(|m| m.len()).sum()
    }

    pub fn edges(&self) -> Vec<Edge> {
        self.out
            .iter()
            .flat_map(|(from, m)| {
                m.iter().map(move |((label, to), w)| Edge {
                    from: from.clone(),
                    to: to.clone(),
                    label: label.clone(),
                    weight: *w,
                })
            })
            .collect()
    }

    pub fn labels(&self) -> BTreeSet<String> {
        self.out.values().flat_map(|m| m.keys().map(|(l, _)| l.clone())).collect()
    }

    /// Incident edges, ordered by (label, other endpoint); for BOTH an edge
    /// pair A→B / B→A appears as two distinct edges, outgoing first.
    pub fn neighbors(&self, node: &ObjectUri, direction: Direction, label: Option<&str>) -> Vec<Edge> {
        let mut out: Vec<(String, ObjectUri, u8, Edge)> = Vec::new();
        if matches!(direction, Direction::Out | Direction::Both) {
            if let Some(m) = self.out.get(node) {
                for ((l, to), w) in m {
                    if label.is_none_or(|x| x == l) {
                        out.push((l.clone(), to.clone(), 0, Edge { from: node.clone(), to: to.clone(), label: l.clone(), weight: *w }));
                    }
                }
            }
        }
        if matches!(direction, Direction::In | Direction::Both) {
            if let Some(m) = self.inc.get(node) {
                for ((l, from), w) in m {
                    if label.is_none_or(|x| x == l) {
                        out.push((l.clone(), from.clone(), 1, Edge { from: from.clone(), to: node.clone(), label: l.clone(), weight: *w }));
                    }
                }
            }
        }
        out.sort_by(|a, b| (&a.0, &a.1, a.2).cmp(&(&b.0, &b.1, b.2)));
        out.into_iter().map(|x| x.3).collect()
    }

    /// Breadth-first expansion from `start`. Edges below `min_weight` (or not
    /// matching `label`) are not followed. Each node is reported once, at the
    /// depth and path weight of its first discovery.
    pub fn traverse(
        &self,
        start: &ObjectUri,
        max_depth: usize,
        direction: Direction,
        min_weight: Option<f64>,
        label: Option<&str>,
    ) -> Vec<Reached> {
        let mut seen: BTreeSet<ObjectUri> = BTreeSet::new();
        seen.insert(start.clone());
        let mut queue: VecDeque<(ObjectUri, usize, f64)> = VecDeque::new();
        queue.push_back((start.clone(), 0, 1.0));
        let mut out = Vec::new();
        while let Some((node, depth, w)) = queue.pop_front() {
            if depth >= max_depth {
                continue;
            }
            for e in self.neighbors(&node, direction, label) {
                if min_weight.is_some_and(|m| e.weight < m) {
                    continue;
                }
                let other = if e.from == node { e.to.clone() } else { e.from.clone() };
                if seen.insert(other.clone()) {
                    let pw = w * e.weight;
                    out.push(Reached { node: other.clone(), depth: depth + 1, weight: pw });
                    queue.push_back((other, depth + 1, pw));
                }
            }
        }
        out
    }

    /// Power-iteration PageRank over the weight-normalised out-edge matrix.
    /// Nodes without outgoing weight spread their rank uniformly.
    pub fn pagerank(&self, damping: f64, tolerance: f64, max_iters: usize) -> Result<CentralityScores> {
        let nodes: Vec<ObjectUri> = self.nodes().into_iter().collect();
        let n = nodes.len();
        if n == 0 {
            return Err(Error::EmptyGraph);
        }
        let pos: BTreeMap<&ObjectUri, usize> = nodes.iter().enumerate().map(|(i, u)| (u, i)).collect();
        // per source: (target index, normalised weight)
        let mut links: Vec<Vec<(usize, f64)>> = vec![Vec::new(); n];
        for (i, u) in nodes.iter().enumerate() {
            if let Some(m) = self.out.get(u) {
                let mut per_target: BTreeMap<usize, f64> = BTreeMap::new();
                for ((_, to), w) in m {
                    *per_target.entry(pos[to]).or_default() += *w;
                }
                let total: f64 = per_target.values().sum();
                if total > 0.0 {
                    links[i] = per_target.into_iter().map(|(j, w)| (j, w / total)).collect();
                }
            }
        }
        let nf = n as f64;
        let mut rank = vec![1.0 / nf; n];
        let mut iterations = 0;
        let mut converged = false;
        while iterations < max_iters {
            iterations += 1;
            let dangling: f64 = (0..n).filter(|&i| links[i].is_empty()).map(|i| rank[i]).sum();
            let base = (1.0 - damping) / nf + damping * dangling / nf;
            let mut next = vec![base; n];
            for (i, l) in links.iter().enumerate() {
                for &(j, w) in l {
                    next[j] += damping * rank[i] * w;
                }
            }
            let delta: f64 = next.iter().zip(&rank).map(|(a, b)| (a - b).abs()).sum();
            rank = next;
            if delta < tolerance {
                converged = true;
                break;
            }
        }
        let sum: f64 = rank.iter().sum();
        let scores = nodes.into_iter().zip(rank.into_iter().map(|r| r / sum)).collect();
        Ok(CentralityScores { scores, iterations, converged })
    }

    /// Nodes satisfying `node_predicate` that, for every constraint, have at
    /// least one qualifying incident edge whose other endpoint satisfies the
    /// constraint's target predicate. `lookup` resolves a predicate to the
    /// set of objects whose metadata satisfies it.
    pub fn class_query<F>(&self, lookup: F, node_predicate: &QueryExpr, constraints: &[EdgeConstraint]) -> BTreeSet<ObjectUri>
    where
        F: Fn(&QueryExpr) -> BTreeSet<ObjectUri>,
    {
        let mut result = lookup(node_predicate);
        for c in constraints {
            if result.is_empty() {
                break;
            }
            let targets = lookup(&c.target);
            result.retain(|n| {
                self.neighbors(n, c.direction, c.label.as_deref()).iter().any(|e| {
                    let other = if &e.from == n { &e.to } else { &e.from };
                    c.min_weight.is_none_or(|m| e.weight >= m) && targets.contains(other)
                })
            });
        }
        result
    }
}

/// Rebuild a graph from the relation tags of live records.
pub fn graph_from_records<'a>(ns: NamespaceId, records: impl IntoIterator<Item = &'a crate::model::ObjectRecord>) -> RelationGraph {
    let mut g = RelationGraph::new(ns);
    for r in records {
        if r.is_tombstone() {
            continue;
        }
        g.register_node(r.uri.clone());
        g.set_out_edges(&r.uri, &r.relations);
    }
    g
}
