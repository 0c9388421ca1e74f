//! Metadata queries and graph operations at namespace scope.

use std::collections::BTreeSet;

use super::engine::Store;
use crate::error::Result;
use crate::graph::{CentralityScores, Direction, Edge, EdgeConstraint, Reached, RelationGraph};
use crate::index::{parse_query, QueryExpr, QueryResult};
use crate::model::{NamespaceId, ObjectUri};
use crate::tenancy::{require, Action, Principal, Resource};

impl Store {
    fn with_graph<T>(&self, actor: &Principal, ns: &NamespaceId, f: impl FnOnce(&RelationGraph) -> T) -> Result<T> {
        require(actor, Action::Query, &Resource::namespace(ns))?;
        let g = self.inner.read();
        g.ns_config(ns)?;
        let empty = RelationGraph::new(ns.clone());
        Ok(f(g.graphs.get(ns).unwrap_or(&empty)))
    }

    pub fn query(
        &self,
        actor: &Principal,
        ns: &NamespaceId,
        expr: &QueryExpr,
        offset: usize,
        limit: Option<usize>,
    ) -> Result<QueryResult> {
        require(actor, Action::Query, &Resource::namespace(ns))?;
        let g = self.inner.read();
        g.ns_config(ns)?;
        Ok(match g.index.get(ns) {
            Some(s) => s.execute(expr, offset, limit),
            None => QueryResult { total: 0, hits: vec![] },
        })
    }

    pub fn query_text(&self, actor: &Principal, ns: &NamespaceId, text: &str, offset: usize, limit: Option<usize>) -> Result<QueryResult> {
        let expr = parse_query(text)?;
        self.query(actor, ns, &expr, offset, limit)
    }

    pub fn neighbors(
        &self,
        actor: &Principal,
        ns: &NamespaceId,
        node: &ObjectUri,
        direction: Direction,
        label: Option<&str>,
    ) -> Result<Vec<Edge>> {
        self.with_graph(actor, ns, |g| g.neighbors(node, direction, label))
    }

    pub fn traverse(
        &self,
        actor: &Principal,
        ns: &NamespaceId,
        start: &ObjectUri,
        max_depth: usize,
        direction: Direction,
        min_weight: Option<f64>,
        label: Option<&str>,
    ) -> Result<Vec<Reached>> {
        self.with_graph(actor, ns, |g| g.traverse(start, max_depth, direction, min_weight, label))
    }

    pub fn pagerank(
        &self,
        actor: &Principal,
        ns: &NamespaceId,
        damping: f64,
        tolerance: f64,
        max_iters: usize,
    ) -> Result<CentralityScores> {
        self.with_graph(actor, ns, |g| g.pagerank(damping, tolerance, max_iters))?
    }

    pub fn class_query(
        &self,
        actor: &Principal,
        ns: &NamespaceId,
        node_predicate: &QueryExpr,
        constraints: &[EdgeConstraint],
    ) -> Result<BTreeSet<ObjectUri>> {
        require(actor, Action::Query, &Resource::namespace(ns))?;
        let g = self.inner.read();
        g.ns_config(ns)?;
        let Some(index) = g.index.get(ns) else {
            return Ok(BTreeSet::new());
        };
        let empty = RelationGraph::new(ns.clone());
        let graph = g.graphs.get(ns).unwrap_or(&empty);
        Ok(graph.class_query(|q| index.matching(q), node_predicate, constraints))
    }
}
