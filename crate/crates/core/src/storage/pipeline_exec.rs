//! Running namespace pipelines against stored objects.

use std::collections::BTreeSet;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use super::engine::{Inner, Store, MAX_EXTRACT_BYTES};
use crate::error::{Error, Result};
use crate::graph::validate_edge;
use crate::index::QueryExpr;
use crate::model::{validate_partition, NamespaceId, ObjectUri};
use crate::pipeline::text::tokenize;
use crate::pipeline::{run_pipeline, MgmKind, ObjectView, Phase, Pipeline, PipelineRun, StageOutput};
use crate::tenancy::{require, Action, Principal, Resource};

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct RunCounts {
    pub annotations_written: usize,
    pub edges_written: usize,
    pub identity_stages: usize,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct BackfillFailure {
    pub uri: ObjectUri,
    pub stage: String,
    pub cause: String,
}

#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct BackfillReport {
    pub objects_processed: usize,
    pub annotations_written: usize,
    pub edges_written: usize,
    pub identity_count: usize,
    pub failures: Vec<BackfillFailure>,
    /// Anchor lookups that found zero or several anchors.
    pub notes: Vec<String>,
    /// Resume point; `None` once the namespace has been covered.
    pub cursor: Option<ObjectUri>,
}

impl Inner {
    pub(crate) fn namespace_pipeline(&self, ns: &NamespaceId) -> Option<Arc<Pipeline>> {
        let r = self.registry.namespace(ns)?.pipeline.clone()?;
        self.pipelines.pipeline(&r)
    }

    /// Run the namespace pipeline over a freshly written object.
    pub(crate) fn ingest_pipeline(&mut self, uri: &ObjectUri) -> Option<PipelineRun> {
        let p = self.namespace_pipeline(&uri.scope())?;
        match self.run_pipeline_on(uri, &p, Phase::All) {
            Ok((run, _)) => {
                if let Some((stage, cause)) = &run.failed {
                    tracing::warn!(uri = %uri, stage, cause, "pipeline stage failed at ingest");
                }
                Some(run)
            }
            Err(e) => {
                tracing::warn!(uri = %uri, error = %e, "pipeline could not run at ingest");
                None
            }
        }
    }

    /// Evaluate `p` on `uri` and persist its outputs. Only changed
    /// partitions and edges are written, so re-running is a no-op.
    pub(crate) fn run_pipeline_on(&mut self, uri: &ObjectUri, p: &Pipeline, phase: Phase) -> Result<(PipelineRun, RunCounts)> {
        let record = self.live_record(uri)?.clone();
        let ns = uri.scope();
        let needs_text = phase != Phase::Relate && p.stages.iter().any(|s| s.kind() == MgmKind::Extract);
        let tokens = if needs_text {
            let blob = self.read_blob(&record)?;
            tokenize(&blob[..blob.len().min(MAX_EXTRACT_BYTES)])
        } else {
            None
        };
        let mut view = ObjectView::with_tokens(uri.clone(), record.system.clone(), tokens, record.partitions.values());
        let limits = self.limits(&ns);
        let mut sandbox = record.clone();
        let mut outputs: Vec<StageOutput> = Vec::new();
        let run = {
            let index = self.index.get(&ns);
            let refdb = &self.refdb;
            let anchors = |q: &QueryExpr| index.map(|s| s.matching(q)).unwrap_or_default();
            let mut persist = |o: &StageOutput| -> Result<()> {
                match o {
                    StageOutput::Partition { name, partition: Some(part) } => {
                        validate_partition(part, &limits).map_err(Error::InvalidPartition)?;
                        if !sandbox.partitions.contains_key(name) && sandbox.partitions.len() >= limits.max_partitions {
                            return Err(Error::TooManyPartitions(limits.max_partitions));
                        }
                        sandbox.partitions.insert(name.clone(), part.clone());
                    }
                    StageOutput::Partition { name, partition: None } => {
                        sandbox.partitions.remove(name);
                    }
                    StageOutput::Edges(tags) => {
                        for t in tags {
                            validate_edge(&ns, uri, &t.target, &t.label, t.weight)?;
                            if !refdb.get(&t.target).is_some_and(|e| e.is_live()) {
                                return Err(Error::NotFound(t.target.to_string()));
                            }
                        }
                    }
                }
                outputs.push(o.clone());
                Ok(())
            };
            run_pipeline(&mut view, p, phase, &anchors, &mut persist)
        };
        let mut counts = RunCounts {
            identity_stages: run.trace.iter().filter(|t| t.identity && t.error.is_none()).count(),
            ..Default::default()
        };
        for o in outputs {
            match o {
                StageOutput::Partition { name, partition } => {
                    let current = self.live_record(uri)?.partitions.get(&name).cloned();
                    if current != partition {
                        self.set_partition(uri, &name, partition)?;
                        counts.annotations_written += 1;
                    }
                }
                StageOutput::Edges(tags) => {
                    for t in tags {
                        if self.live_record(uri)?.relation(&t.label, &t.target) != Some(&t) {
                            self.put_relation(uri, t)?;
                            counts.edges_written += 1;
                        }
                    }
                }
            }
        }
        Ok((run, counts))
    }

    pub(crate) fn backfill(
        &mut self,
        ns: &NamespaceId,
        pipeline: &Pipeline,
        cursor: Option<&ObjectUri>,
        limit: Option<usize>,
    ) -> Result<BackfillReport> {
        self.ns_config(ns)?;
        let live: Vec<ObjectUri> = self
            .refdb
            .namespace_entries(ns)
            .filter(|(u, e)| e.is_live() && cursor.is_none_or(|c| *u > c))
            .map(|(u, _)| u.clone())
            .collect();
        let take = limit.unwrap_or(usize::MAX).min(live.len());
        let batch = &live[..take];
        let mut report = BackfillReport {
            objects_processed: batch.len(),
            cursor: if take < live.len() { batch.last().cloned().or_else(|| cursor.cloned()) } else { None },
            ..Default::default()
        };
        // annotate everything first so anchors are visible to the relate pass
        let mut failed: BTreeSet<ObjectUri> = BTreeSet::new();
        let phases: &[Phase] = if pipeline.has_relate() { &[Phase::Annotate, Phase::Relate] } else { &[Phase::Annotate] };
        for &phase in phases {
            for uri in batch {
                if failed.contains(uri) {
                    continue;
                }
                let (run, counts) = match self.run_pipeline_on(uri, pipeline, phase) {
                    Ok(x) => x,
                    Err(e) => {
                        failed.insert(uri.clone());
                        report.failures.push(BackfillFailure { uri: uri.clone(), stage: String::new(), cause: e.to_string() });
                        continue;
                    }
                };
                report.annotations_written += counts.annotations_written;
                report.edges_written += counts.edges_written;
                report.identity_count += counts.identity_stages;
                for t in &run.trace {
                    report.notes.extend(t.notes.iter().map(|n| format!("{uri}: {n}")));
                }
                if let Some((stage, cause)) = run.failed {
                    failed.insert(uri.clone());
                    report.failures.push(BackfillFailure { uri: uri.clone(), stage, cause });
                }
            }
        }
        Ok(report)
    }
}

impl Store {
    /// Run the namespace pipeline over one object.
    pub fn run_pipeline(&self, actor: &Principal, uri: &ObjectUri) -> Result<PipelineRun> {
        let ns = uri.scope();
        require(actor, Action::Annotate, &Resource::namespace(&ns))?;
        let mut g = self.inner.write();
        g.ns_config(&ns)?;
        let p = g.namespace_pipeline(&ns).unwrap_or_else(|| Arc::new(Pipeline::empty("none")));
        g.run_pipeline_on(uri, &p, Phase::All).map(|(r, _)| r)
    }

    /// Run a pipeline (by default the namespace's own) over the live
    /// objects after `cursor`, in URI order.
    pub fn backfill(
        &self,
        actor: &Principal,
        ns: &NamespaceId,
        pipeline: Option<&str>,
        cursor: Option<&ObjectUri>,
        limit: Option<usize>,
    ) -> Result<BackfillReport> {
        require(actor, Action::Annotate, &Resource::namespace(ns))?;
        let mut g = self.inner.write();
        g.ns_config(ns)?;
        let p = match pipeline {
            Some(r) => g.pipelines.pipeline_or_err(r)?,
            None => g.namespace_pipeline(ns).unwrap_or_else(|| Arc::new(Pipeline::empty("none"))),
        };
        g.backfill(ns, &p, cursor, limit)
    }
}
