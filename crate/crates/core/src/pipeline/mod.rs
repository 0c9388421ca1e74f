//! Data dictionaries and per-namespace metadata generation pipelines.

pub mod dictionary;
pub mod mgm;
pub mod text;
pub mod view;

use std::collections::BTreeMap;
use std::sync::Arc;

pub use dictionary::{apply, compile_dictionary, extract, parse_dictionary_doc, DataDictionary, DictionaryDoc};
pub use mgm::{
    compile_pipeline, fold_trace, parse_pipeline_doc, run_pipeline, Mgm, MgmKind, Phase, Pipeline, PipelineDoc, PipelineRun, RelateSpec,
    StageOutput, StageTrace,
};
pub use view::ObjectView;

use crate::error::{Error, Result};

/// Published dictionaries and pipelines. Every publish creates a new
/// immutable version; versions start at 1.
#[derive(Clone, Debug, Default)]
pub struct PipelineRegistry {
    dictionaries: BTreeMap<String, Vec<Arc<DataDictionary>>>,
    pipelines: BTreeMap<String, Vec<Arc<Pipeline>>>,
}

impl PipelineRegistry {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn publish_dictionary(&mut self, doc: DictionaryDoc) -> Result<u32> {
        let d = dictionary::compile_doc(doc)?;
        let versions = self.dictionaries.entry(d.id.clone()).or_default();
        versions.push(Arc::new(d));
        Ok(versions.len() as u32)
    }

    pub fn dictionary(&self, id: &str, version: Option<u32>) -> Option<(Arc<DataDictionary>, u32)> {
        let versions = self.dictionaries.get(id)?;
        let v = version.unwrap_or(versions.len() as u32);
        let d = versions.get((v as usize).checked_sub(1)?)?;
        Some((d.clone(), v))
    }

    pub fn compile(&self, doc: PipelineDoc) -> Result<Pipeline> {
        compile_pipeline(doc, &|id, v| self.dictionary(id, v))
    }

    pub fn publish_pipeline(&mut self, doc: PipelineDoc) -> Result<u32> {
        let p = self.compile(doc)?;
        let versions = self.pipelines.entry(p.id.clone()).or_default();
        versions.push(Arc::new(p));
        Ok(versions.len() as u32)
    }

    pub fn pipeline(&self, r: &str) -> Option<Arc<Pipeline>> {
        let (id, v) = mgm::parse_ref(r);
        let versions = self.pipelines.get(id)?;
        let v = v.unwrap_or(versions.len() as u32);
        versions.get((v as usize).checked_sub(1)?).cloned()
    }

    pub fn pipeline_or_err(&self, r: &str) -> Result<Arc<Pipeline>> {
        self.pipeline(r).ok_or_else(|| Error::InvalidConfig(format!("pipeline {r:?} does not exist")))
    }

    pub fn has_pipeline(&self, r: &str) -> bool {
        self.pipeline(r).is_some()
    }

    pub fn dictionary_ids(&self) -> Vec<(String, u32)> {
        self.dictionaries.iter().map(|(k, v)| (k.clone(), v.len() as u32)).collect()
    }

    pub fn pipeline_ids(&self) -> Vec<(String, u32)> {
        self.pipelines.iter().map(|(k, v)| (k.clone(), v.len() as u32)).collect()
    }
}
