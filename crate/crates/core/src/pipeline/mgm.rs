//! Metadata generation modules and pipelines.

use std::collections::{BTreeMap, BTreeSet};
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use super::dictionary::{apply, extract, DataDictionary};
use super::view::ObjectView;
use crate::error::{Error, Result};
use crate::index::{parse_query, CmpOp, QueryExpr};
use crate::model::{valid_partition_name, MetadataPartition, ObjectUri, RelationTag, DEFAULT_RELATION_LABEL};

pub const PIPELINE_FORMAT: u32 = 1;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum MgmKind {
    Extract,
    Apply,
    Relate,
}

fn default_label() -> String {
    DEFAULT_RELATION_LABEL.to_string()
}

fn default_weight() -> f64 {
    1.0
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RelateDoc {
    pub join_key: String,
    pub anchor_selector: String,
    #[serde(default = "default_label")]
    pub label: String,
    #[serde(default = "default_weight")]
    pub weight: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StageDoc {
    pub id: String,
    pub kind: MgmKind,
    /// `id` for the latest published version, or `id@N`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub dictionary: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub target_partition: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub relate: Option<RelateDoc>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PipelineDoc {
    pub format_version: u32,
    pub id: String,
    #[serde(default)]
    pub stages: Vec<StageDoc>,
}

#[derive(Clone, Debug)]
pub struct RelateSpec {
    pub join_key: String,
    pub anchor_selector: QueryExpr,
    pub label: String,
    pub weight: f64,
}

#[derive(Clone, Debug)]
pub enum StageOp {
    Extract(Arc<DataDictionary>),
    Apply(Arc<DataDictionary>),
    Relate(RelateSpec),
}

#[derive(Clone, Debug)]
pub struct Mgm {
    pub id: String,
    pub target_partition: Option<String>,
    pub op: StageOp,
}

impl Mgm {
    pub fn kind(&self) -> MgmKind {
        match self.op {
            StageOp::Extract(_) => MgmKind::Extract,
            StageOp::Apply(_) => MgmKind::Apply,
            StageOp::Relate(_) => MgmKind::Relate,
        }
    }
}

#[derive(Clone, Debug)]
pub struct Pipeline {
    pub id: String,
    pub stages: Vec<Mgm>,
    /// The document with every dictionary reference pinned to `id@N`.
    pub doc: PipelineDoc,
}

impl Pipeline {
    pub fn empty(id: &str) -> Self {
        Self { id: id.into(), stages: vec![], doc: PipelineDoc { format_version: PIPELINE_FORMAT, id: id.into(), stages: vec![] } }
    }

    pub fn target_partitions(&self) -> BTreeSet<&str> {
        self.stages.iter().filter_map(|s| s.target_partition.as_deref()).collect()
    }

    pub fn has_relate(&self) -> bool {
        self.stages.iter().any(|s| s.kind() == MgmKind::Relate)
    }
}

fn invalid(path: impl std::fmt::Display, message: impl std::fmt::Display) -> Error {
    Error::InvalidConfig(format!("{path}: {message}"))
}

/// Parse a pipeline document without resolving its dictionaries.
pub fn parse_pipeline_doc(bytes: &[u8]) -> Result<PipelineDoc> {
    let de = &mut serde_json::Deserializer::from_slice(bytes);
    serde_path_to_error::deserialize(de).map_err(|e| invalid(e.path(), e.inner()))
}

/// Split `id@N` into its parts.
pub fn parse_ref(r: &str) -> (&str, Option<u32>) {
    match r.rsplit_once('@') {
        Some((id, v)) => match v.parse() {
            Ok(n) => (id, Some(n)),
            Err(_) => (r, None),
        },
        None => (r, None),
    }
}

/// Compile a pipeline document. `resolve` maps a dictionary reference to
/// the pinned dictionary and its version.
pub fn compile_pipeline(
    doc: PipelineDoc,
    resolve: &dyn Fn(&str, Option<u32>) -> Option<(Arc<DataDictionary>, u32)>,
) -> Result<Pipeline> {
    if doc.format_version != PIPELINE_FORMAT {
        return Err(invalid("format_version", format!("unsupported version {}", doc.format_version)));
    }
    if !valid_partition_name(&doc.id) {
        return Err(invalid("id", format!("invalid pipeline id {:?}", doc.id)));
    }
    let mut ids = BTreeSet::new();
    let mut targets = BTreeSet::new();
    let mut stages = Vec::new();
    let mut pinned = doc.clone();
    let last = doc.stages.len().saturating_sub(1);
    for (i, s) in doc.stages.iter().enumerate() {
        let at = format!("stages[{i}]");
        if s.id.is_empty() || !ids.insert(s.id.clone()) {
            return Err(invalid(format!("{at}.id"), format!("duplicate or empty stage id {:?}", s.id)));
        }
        if let Some(t) = &s.target_partition {
            if !valid_partition_name(t) {
                return Err(invalid(format!("{at}.target_partition"), format!("invalid partition name {t:?}")));
            }
            if !targets.insert(t.clone()) {
                return Err(invalid(format!("{at}.target_partition"), format!("{t:?} already owned by another stage")));
            }
        }
        let op = match s.kind {
            MgmKind::Extract | MgmKind::Apply => {
                if s.target_partition.is_none() {
                    return Err(invalid(format!("{at}.target_partition"), "required"));
                }
                if s.relate.is_some() {
                    return Err(invalid(format!("{at}.relate"), "only RELATE stages take a relate spec"));
                }
                let r = s.dictionary.as_deref().ok_or_else(|| invalid(format!("{at}.dictionary"), "required"))?;
                let (id, v) = parse_ref(r);
                let (dict, version) =
                    resolve(id, v).ok_or_else(|| invalid(format!("{at}.dictionary"), format!("unknown dictionary {r:?}")))?;
                pinned.stages[i].dictionary = Some(format!("{id}@{version}"));
                if s.kind == MgmKind::Extract {
                    StageOp::Extract(dict)
                } else {
                    StageOp::Apply(dict)
                }
            }
            MgmKind::Relate => {
                if i != last {
                    return Err(invalid(&at, "RELATE is only legal as the final stage"));
                }
                if s.dictionary.is_some() || s.target_partition.is_some() {
                    return Err(invalid(&at, "RELATE takes only a relate spec"));
                }
                let r = s.relate.as_ref().ok_or_else(|| invalid(format!("{at}.relate"), "required"))?;
                if !crate::index::query::valid_key(&r.join_key) {
                    return Err(invalid(format!("{at}.relate.join_key"), format!("invalid key {:?}", r.join_key)));
                }
                if !(0.0..=1.0).contains(&r.weight) {
                    return Err(invalid(format!("{at}.relate.weight"), format!("{} outside [0, 1]", r.weight)));
                }
                if !crate::model::valid_partition_name(&r.label) {
                    return Err(invalid(format!("{at}.relate.label"), format!("invalid label {:?}", r.label)));
                }
                let anchor_selector = parse_query(&r.anchor_selector)
                    .map_err(|e| invalid(format!("{at}.relate.anchor_selector"), e))?;
                StageOp::Relate(RelateSpec {
                    join_key: r.join_key.clone(),
                    anchor_selector,
                    label: r.label.clone(),
                    weight: r.weight,
                })
            }
        };
        stages.push(Mgm { id: s.id.clone(), target_partition: s.target_partition.clone(), op });
    }
    Ok(Pipeline { id: doc.id.clone(), stages, doc: pinned })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StageTrace {
    pub stage: String,
    pub kind: MgmKind,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub target_partition: Option<String>,
    /// The stage's contribution; for RELATE, empty.
    pub pairs: BTreeMap<String, String>,
    /// Nothing was emitted: output view equals input view.
    pub identity: bool,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub edges: Vec<RelationTag>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub notes: Vec<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

/// What a stage asks the store to persist.
#[derive(Clone, Debug, PartialEq)]
pub enum StageOutput {
    /// Replace (`Some`) or clear (`None`) the stage's target partition.
    Partition { name: String, partition: Option<MetadataPartition> },
    Edges(Vec<RelationTag>),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Phase {
    All,
    /// EXTRACT and APPLY stages only.
    Annotate,
    /// The RELATE stage only, against the view as persisted.
    Relate,
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct PipelineRun {
    pub trace: Vec<StageTrace>,
    pub failed: Option<(String, String)>,
}

impl PipelineRun {
    pub fn error(&self) -> Option<Error> {
        self.failed.as_ref().map(|(stage, cause)| Error::PipelineStage { stage: stage.clone(), cause: cause.clone() })
    }
}

/// First value per key wins.
fn to_map(pairs: Vec<(String, String)>) -> BTreeMap<String, String> {
    let mut m = BTreeMap::new();
    for (k, v) in pairs {
        m.entry(k).or_insert(v);
    }
    m
}

fn clause_eq(key: &str, value: &str) -> QueryExpr {
    QueryExpr::clause(key, CmpOp::Eq, value)
}

/// Run `pipeline` over `view`.
///
/// Each output is handed to `persist` before the next stage runs; a failure
/// there stops the run with that stage marked failed. `anchors` resolves a
/// query to the matching URIs of the namespace.
pub fn run_pipeline(
    view: &mut ObjectView,
    pipeline: &Pipeline,
    phase: Phase,
    anchors: &dyn Fn(&QueryExpr) -> BTreeSet<ObjectUri>,
    persist: &mut dyn FnMut(&StageOutput) -> Result<()>,
) -> PipelineRun {
    let mut run = PipelineRun::default();
    if phase != Phase::Relate {
        for t in pipeline.target_partitions() {
            view.accumulated.remove(t);
        }
    }
    for stage in &pipeline.stages {
        let relate = stage.kind() == MgmKind::Relate;
        if (phase == Phase::Annotate && relate) || (phase == Phase::Relate && !relate) {
            continue;
        }
        let mut t = StageTrace {
            stage: stage.id.clone(),
            kind: stage.kind(),
            target_partition: stage.target_partition.clone(),
            pairs: BTreeMap::new(),
            identity: true,
            edges: vec![],
            notes: vec![],
            error: None,
        };
        let output = match &stage.op {
            StageOp::Extract(d) | StageOp::Apply(d) => {
                let pairs = if stage.kind() == MgmKind::Extract { extract(view, d) } else { apply(view, d) };
                t.pairs = to_map(pairs);
                t.identity = t.pairs.is_empty();
                let name = stage.target_partition.clone().expect("validated at compile time");
                let partition = (!t.pairs.is_empty())
                    .then(|| MetadataPartition { name: name.clone(), pairs: t.pairs.clone() });
                StageOutput::Partition { name, partition }
            }
            StageOp::Relate(spec) => {
                for value in view.values_of(&spec.join_key) {
                    let q = QueryExpr::And(vec![spec.anchor_selector.clone(), clause_eq(&spec.join_key, value)]);
                    let found = anchors(&q);
                    match found.len() {
                        0 => t.notes.push(format!("no anchor for {}={value}", spec.join_key)),
                        1 => {
                            let anchor = found.into_iter().next().expect("one element");
                            if anchor != view.uri {
                                t.edges.push(RelationTag::new(spec.label.clone(), anchor, spec.weight));
                            }
                        }
                        n => t.notes.push(format!("ambiguous anchor for {}={value}: {n} candidates", spec.join_key)),
                    }
                }
                t.identity = t.edges.is_empty();
                StageOutput::Edges(t.edges.clone())
            }
        };
        if let Err(e) = persist(&output) {
            t.error = Some(e.to_string());
            run.failed = Some((stage.id.clone(), e.to_string()));
            run.trace.push(t);
            return run;
        }
        if let StageOutput::Partition { name, partition } = output {
            match partition {
                Some(p) => {
                    view.accumulated.insert(name, p.pairs);
                }
                None => {
                    view.accumulated.remove(&name);
                }
            }
        }
        run.trace.push(t);
    }
    run
}

/// Recompute the target partitions from a trace.
pub fn fold_trace(trace: &[StageTrace]) -> BTreeMap<String, Option<MetadataPartition>> {
    let mut out = BTreeMap::new();
    for t in trace {
        if let (Some(name), None) = (&t.target_partition, &t.error) {
            let p = (!t.pairs.is_empty()).then(|| MetadataPartition { name: name.clone(), pairs: t.pairs.clone() });
            out.insert(name.clone(), p);
        }
    }
    out
}
