//! Per-namespace inverted index over partition scalars.

use std::collections::{BTreeMap, BTreeSet};
use std::ops::Bound;

use serde::{Deserialize, Serialize};

use super::decimal::Decimal;
use super::query::{Clause, CmpOp, QueryExpr};
use crate::model::{valid_partition_name, MetadataPartition, ObjectUri};

/// One acknowledged mutation as seen by the index.
#[derive(Clone, Debug, PartialEq)]
pub enum IndexEvent {
    /// Object became live (or was replaced wholesale) with these partitions.
    PutObject { uri: ObjectUri, partitions: Vec<MetadataPartition> },
    PutPartition { uri: ObjectUri, partition: MetadataPartition },
    DeletePartition { uri: ObjectUri, name: String },
    /// Object tombstoned: every posting removed.
    DeleteObject { uri: ObjectUri },
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct QueryHit {
    pub uri: ObjectUri,
    /// Pairs of this object whose keys the query references, by partition.
    pub scalars: BTreeMap<String, BTreeMap<String, String>>,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct QueryResult {
    pub total: usize,
    pub hits: Vec<QueryHit>,
}

type Postings = BTreeMap<ObjectUri, BTreeSet<String>>;

#[derive(Clone, Debug, Default)]
struct KeyPostings {
    /// raw value → object → partitions holding that pair.
    values: BTreeMap<String, Postings>,
    /// Values that parse as decimals, grouped by numeric value.
    numeric: BTreeMap<Decimal, BTreeSet<String>>,
    /// Values that do not.
    text: BTreeSet<String>,
}

impl KeyPostings {
    fn add(&mut self, value: &str, uri: &ObjectUri, partition: &str) {
        let fresh = !self.values.contains_key(value);
        self.values.entry(value.to_string()).or_default().entry(uri.clone()).or_default().insert(partition.to_string());
        if fresh {
            match Decimal::parse(value) {
                Some(d) => {
                    self.numeric.entry(d).or_default().insert(value.to_string());
                }
                None => {
                    self.text.insert(value.to_string());
                }
            }
        }
    }

    fn remove(&mut self, value: &str, uri: &ObjectUri, partition: &str) {
        let Some(postings) = self.values.get_mut(value) else { return };
        if let Some(parts) = postings.get_mut(uri) {
            parts.remove(partition);
            if parts.is_empty() {
                postings.remove(uri);
            }
        }
        if postings.is_empty() {
            self.values.remove(value);
            match Decimal::parse(value) {
                Some(d) => {
                    if let Some(raw) = self.numeric.get_mut(&d) {
                        raw.remove(value);
                        if raw.is_empty() {
                            self.numeric.remove(&d);
                        }
                    }
                }
                None => {
                    self.text.remove(value);
                }
            }
        }
    }

    fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    /// Raw values satisfying `op operand`.
    fn satisfying(&self, op: CmpOp, operand: &str) -> Vec<&String> {
        use Bound::*;
        let q = operand.to_string();
        if op == CmpOp::Prefix {
            return self.values.range(q.clone()..).take_while(|(v, _)| v.starts_with(operand)).map(|(v, _)| v).collect();
        }
        match Decimal::parse(operand) {
            Some(d) => {
                let numeric: Box<dyn Iterator<Item = (&Decimal, &BTreeSet<String>)>> = match op {
                    CmpOp::Eq => Box::new(self.numeric.range(d.clone()..=d.clone())),
                    CmpOp::Lt => Box::new(self.numeric.range(..d.clone())),
                    CmpOp::Le => Box::new(self.numeric.range(..=d.clone())),
                    CmpOp::Gt => Box::new(self.numeric.range((Excluded(d.clone()), Unbounded))),
                    CmpOp::Ge => Box::new(self.numeric.range(d.clone()..)),
                    CmpOp::Ne => Box::new(self.numeric.iter().filter(move |(k, _)| **k != d)),
                    CmpOp::Prefix => unreachable!(),
                };
                let mut out: Vec<&String> = numeric.flat_map(|(_, raws)| raws.iter()).collect();
                // text values are compared bytewise against the operand text
                let text: Box<dyn Iterator<Item = &String>> = match op {
                    CmpOp::Eq => Box::new(std::iter::empty()),
                    CmpOp::Ne => Box::new(self.text.iter()),
                    CmpOp::Lt => Box::new(self.text.range::<String, _>(..q.clone())),
                    CmpOp::Le => Box::new(self.text.range::<String, _>(..=q.clone())),
                    CmpOp::Gt => Box::new(self.text.range::<String, _>((Excluded(q.clone()), Unbounded))),
                    CmpOp::Ge => Box::new(self.text.range::<String, _>(q.clone()..)),
                    CmpOp::Prefix => unreachable!(),
                };
                out.extend(text);
                out
            }
            None => {
                let it: Box<dyn Iterator<Item = (&String, &Postings)>> = match op {
                    CmpOp::Eq => Box::new(self.values.range::<String, _>(q.clone()..=q.clone())),
                    CmpOp::Ne => Box::new(self.values.iter().filter(move |(v, _)| v.as_str() != operand)),
                    CmpOp::Lt => Box::new(self.values.range::<String, _>(..q.clone())),
                    CmpOp::Le => Box::new(self.values.range::<String, _>(..=q.clone())),
                    CmpOp::Gt => Box::new(self.values.range::<String, _>((Excluded(q.clone()), Unbounded))),
                    CmpOp::Ge => Box::new(self.values.range::<String, _>(q.clone()..)),
                    CmpOp::Prefix => unreachable!(),
                };
                it.map(|(v, _)| v).collect()
            }
        }
    }

    fn collect(&self, clause: &Clause, only_partition: Option<&str>, out: &mut BTreeSet<ObjectUri>) {
        for v in self.satisfying(clause.op, &clause.value) {
            for (uri, parts) in &self.values[v] {
                if only_partition.is_none_or(|p| parts.contains(p)) {
                    out.insert(uri.clone());
                }
            }
        }
    }
}

#[derive(Clone, Debug, Default)]
pub struct IndexShard {
    /// Forward map of every live object: partition → pairs.
    docs: BTreeMap<ObjectUri, BTreeMap<String, BTreeMap<String, String>>>,
    postings: BTreeMap<String, KeyPostings>,
}

impl IndexShard {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.docs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.docs.is_empty()
    }

    pub fn contains(&self, uri: &ObjectUri) -> bool {
        self.docs.contains_key(uri)
    }

    pub fn live(&self) -> impl Iterator<Item = &ObjectUri> {
        self.docs.keys()
    }

    /// Indexed pairs of one object.
    pub fn doc(&self, uri: &ObjectUri) -> Option<&BTreeMap<String, BTreeMap<String, String>>> {
        self.docs.get(uri)
    }

    pub fn apply(&mut self, event: &IndexEvent) {
        match event {
            IndexEvent::PutObject { uri, partitions } => {
                self.remove_doc(uri);
                self.docs.insert(uri.clone(), BTreeMap::new());
                for p in partitions {
                    self.put_partition(uri, p);
                }
            }
            IndexEvent::PutPartition { uri, partition } => {
                self.remove_partition(uri, &partition.name);
                self.put_partition(uri, partition);
            }
            IndexEvent::DeletePartition { uri, name } => self.remove_partition(uri, name),
            IndexEvent::DeleteObject { uri } => self.remove_doc(uri),
        }
    }

    fn put_partition(&mut self, uri: &ObjectUri, p: &MetadataPartition) {
        for (k, v) in &p.pairs {
            self.postings.entry(k.clone()).or_default().add(v, uri, &p.name);
        }
        self.docs.entry(uri.clone()).or_default().insert(p.name.clone(), p.pairs.clone());
    }

    fn remove_partition(&mut self, uri: &ObjectUri, name: &str) {
        let Some(doc) = self.docs.get_mut(uri) else { return };
        let Some(pairs) = doc.remove(name) else { return };
        for (k, v) in pairs {
            if let Some(kp) = self.postings.get_mut(&k) {
                kp.remove(&v, uri, name);
                if kp.is_empty() {
                    self.postings.remove(&k);
                }
            }
        }
    }

    fn remove_doc(&mut self, uri: &ObjectUri) {
        let names: Vec<String> = match self.docs.get(uri) {
            Some(d) => d.keys().cloned().collect(),
            None => return,
        };
        for n in names {
            self.remove_partition(uri, &n);
        }
        self.docs.remove(uri);
    }

    fn clause_set(&self, c: &Clause) -> BTreeSet<ObjectUri> {
        let mut out = BTreeSet::new();
        if let Some(kp) = self.postings.get(&c.key) {
            kp.collect(c, None, &mut out);
        }
        if let Some((p, k)) = c.key.split_once('.') {
            if valid_partition_name(p) {
                if let Some(kp) = self.postings.get(k) {
                    kp.collect(c, Some(p), &mut out);
                }
            }
        }
        out
    }

    /// The set of live objects satisfying `expr`.
    pub fn matching(&self, expr: &QueryExpr) -> BTreeSet<ObjectUri> {
        match expr {
            QueryExpr::Clause(c) => self.clause_set(c),
            QueryExpr::And(items) => {
                let mut iter = items.iter();
                let mut acc = match iter.next() {
                    Some(e) => self.matching(e),
                    None => return self.docs.keys().cloned().collect(),
                };
                for e in iter {
                    if acc.is_empty() {
                        break;
                    }
                    let next = self.matching(e);
                    acc.retain(|u| next.contains(u));
                }
                acc
            }
            QueryExpr::Or(items) => {
                let mut acc = BTreeSet::new();
                for e in items {
                    acc.extend(self.matching(e));
                }
                acc
            }
            QueryExpr::Not(e) => {
                let inner = self.matching(e);
                self.docs.keys().filter(|u| !inner.contains(*u)).cloned().collect()
            }
        }
    }

    /// Matching objects in URI order, paged, with scalar snapshots.
    pub fn execute(&self, expr: &QueryExpr, offset: usize, limit: Option<usize>) -> QueryResult {
        let all = self.matching(expr);
        let clauses = expr.clauses();
        let total = all.len();
        let hits = all
            .into_iter()
            .skip(offset)
            .take(limit.unwrap_or(usize::MAX))
            .map(|uri| {
                let mut scalars: BTreeMap<String, BTreeMap<String, String>> = BTreeMap::new();
                if let Some(doc) = self.docs.get(&uri) {
                    for (p, pairs) in doc {
                        for (k, v) in pairs {
                            if clauses.iter().any(|c| c.addresses(p, k)) {
                                scalars.entry(p.clone()).or_default().insert(k.clone(), v.clone());
                            }
                        }
                    }
                }
                QueryHit { uri, scalars }
            })
            .collect();
        QueryResult { total, hits }
    }
}
