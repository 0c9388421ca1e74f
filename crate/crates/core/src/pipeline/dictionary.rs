//! Data dictionaries: PATTERN/TERM extraction rules and selector-driven
//! application rules, compiled from JSON documents.

use std::collections::BTreeSet;

use globset::{GlobBuilder, GlobMatcher};
use serde::{Deserialize, Serialize};

use super::text::Token;
use super::view::ObjectView;
use crate::error::{Error, Result};
use crate::index::{parse_query, QueryExpr};
use crate::model::PartitionLimits;

pub const DICTIONARY_FORMAT: u32 = 1;

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EmitPair {
    pub key: String,
    pub value: String,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExtractRuleDoc {
    pub id: String,
    pub kind: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub key: Option<String>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub aliases: Vec<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub term: Option<String>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub emit: Vec<EmitPair>,
}

#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SelectorDoc {
    /// Matched against `<namespace>/<path>`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub uri_glob: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub query: Option<String>,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ApplyRuleDoc {
    pub id: String,
    #[serde(default)]
    pub selector: SelectorDoc,
    pub emit: Vec<EmitPair>,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DictionaryDoc {
    pub format_version: u32,
    pub id: String,
    #[serde(default)]
    pub extract_rules: Vec<ExtractRuleDoc>,
    #[serde(default)]
    pub apply_rules: Vec<ApplyRuleDoc>,
}

#[derive(Clone, Debug)]
pub enum ExtractRule {
    Pattern { id: String, key: String, names: Vec<String> },
    Term { id: String, words: Vec<String>, emit: Vec<(String, String)> },
}

#[derive(Clone, Debug)]
pub struct ApplyRule {
    pub id: String,
    pub glob: Option<GlobMatcher>,
    pub query: Option<QueryExpr>,
    pub emit: Vec<(String, String)>,
}

#[derive(Clone, Debug)]
pub struct DataDictionary {
    pub id: String,
    pub extract_rules: Vec<ExtractRule>,
    pub apply_rules: Vec<ApplyRule>,
    pub doc: DictionaryDoc,
}

fn malformed(path: impl Into<String>, message: impl Into<String>) -> Error {
    Error::MalformedDictionary { path: path.into(), message: message.into() }
}

fn check_key(path: &str, key: &str) -> Result<()> {
    let limits = PartitionLimits::default();
    if !crate::index::query::valid_key(key) || key.len() > limits.max_key_bytes {
        return Err(malformed(path, format!("invalid key {key:?}")));
    }
    Ok(())
}

fn compile_emit(path: &str, emit: &[EmitPair]) -> Result<Vec<(String, String)>> {
    let limits = PartitionLimits::default();
    emit.iter()
        .enumerate()
        .map(|(i, p)| {
            check_key(&format!("{path}[{i}].key"), &p.key)?;
            if p.value.len() > limits.max_value_bytes {
                return Err(malformed(format!("{path}[{i}].value"), "value too large"));
            }
            Ok((p.key.clone(), p.value.clone()))
        })
        .collect()
}

fn fold_words(s: &str) -> Vec<String> {
    super::text::tokenize(s.as_bytes())
        .unwrap_or_default()
        .iter()
        .filter_map(|t| t.text().map(|w| w.to_ascii_lowercase()))
        .collect()
}

pub fn compile_glob(pattern: &str) -> std::result::Result<GlobMatcher, globset::Error> {
    Ok(GlobBuilder::new(pattern).literal_separator(true).build()?.compile_matcher())
}

/// Parse a dictionary document without compiling it.
pub fn parse_dictionary_doc(bytes: &[u8]) -> Result<DictionaryDoc> {
    let de = &mut serde_json::Deserializer::from_slice(bytes);
    serde_path_to_error::deserialize(de).map_err(|e| {
        let path = e.path().to_string();
        malformed(if path == "." { "$".into() } else { path }, e.into_inner().to_string())
    })
}

/// Compile a dictionary document.
pub fn compile_dictionary(bytes: &[u8]) -> Result<DataDictionary> {
    compile_doc(parse_dictionary_doc(bytes)?)
}

pub fn compile_doc(doc: DictionaryDoc) -> Result<DataDictionary> {
    if doc.format_version != DICTIONARY_FORMAT {
        return Err(malformed("format_version", format!("unsupported version {}", doc.format_version)));
    }
    if !crate::model::valid_partition_name(&doc.id) {
        return Err(malformed("id", format!("invalid dictionary id {:?}", doc.id)));
    }
    let mut ids = BTreeSet::new();
    let mut extract_rules = Vec::new();
    for (i, r) in doc.extract_rules.iter().enumerate() {
        let at = format!("extract_rules[{i}]");
        if r.id.is_empty() || !ids.insert(r.id.clone()) {
            return Err(malformed(format!("{at}.id"), format!("duplicate or empty rule id {:?}", r.id)));
        }
        match r.kind.as_str() {
            "PATTERN" => {
                let key = r.key.clone().ok_or_else(|| malformed(format!("{at}.key"), "PATTERN needs a key"))?;
                check_key(&format!("{at}.key"), &key)?;
                if r.term.is_some() || !r.emit.is_empty() {
                    return Err(malformed(&at, "PATTERN takes only key and aliases"));
                }
                let mut names = vec![key.to_ascii_lowercase()];
                for (j, a) in r.aliases.iter().enumerate() {
                    if a.is_empty() || a.chars().any(|c| c.is_whitespace() || c == '=' || c == ':') {
                        return Err(malformed(format!("{at}.aliases[{j}]"), format!("invalid alias {a:?}")));
                    }
                    names.push(a.to_ascii_lowercase());
                }
                extract_rules.push(ExtractRule::Pattern { id: r.id.clone(), key, names });
            }
            "TERM" => {
                let term = r.term.as_deref().ok_or_else(|| malformed(format!("{at}.term"), "TERM needs a term"))?;
                let words = fold_words(term);
                if words.is_empty() {
                    return Err(malformed(format!("{at}.term"), "term has no words"));
                }
                if r.key.is_some() || !r.aliases.is_empty() {
                    return Err(malformed(&at, "TERM takes only term and emit"));
                }
                let emit = compile_emit(&format!("{at}.emit"), &r.emit)?;
                extract_rules.push(ExtractRule::Term { id: r.id.clone(), words, emit });
            }
            other => return Err(malformed(format!("{at}.kind"), format!("unknown kind {other:?}"))),
        }
    }
    let mut apply_rules = Vec::new();
    for (i, r) in doc.apply_rules.iter().enumerate() {
        let at = format!("apply_rules[{i}]");
        if r.id.is_empty() || !ids.insert(r.id.clone()) {
            return Err(malformed(format!("{at}.id"), format!("duplicate or empty rule id {:?}", r.id)));
        }
        let glob = match &r.selector.uri_glob {
            Some(g) => Some(compile_glob(g).map_err(|e| malformed(format!("{at}.selector.uri_glob"), e.to_string()))?),
            None => None,
        };
        let query = match &r.selector.query {
            Some(q) => Some(parse_query(q).map_err(|e| malformed(format!("{at}.selector.query"), e.to_string()))?),
            None => None,
        };
        let emit = compile_emit(&format!("{at}.emit"), &r.emit)?;
        apply_rules.push(ApplyRule { id: r.id.clone(), glob, query, emit });
    }
    Ok(DataDictionary { id: doc.id.clone(), extract_rules, apply_rules, doc })
}

fn push_unique(out: &mut Vec<(String, String)>, k: &str, v: &str) {
    if !out.iter().any(|(a, b)| a == k && b == v) {
        out.push((k.to_string(), v.to_string()));
    }
}

/// Content ∩ dictionary. Pairs are unique and in discovery order.
pub fn extract(view: &ObjectView, d: &DataDictionary) -> Vec<(String, String)> {
    let mut out = Vec::new();
    let Some(tokens) = view.tokens.as_deref() else {
        return out;
    };
    let folded: Vec<Option<String>> = tokens
        .iter()
        .map(|t| match t {
            Token::Word(w) => Some(w.to_ascii_lowercase()),
            _ => None,
        })
        .collect();
    for rule in &d.extract_rules {
        match rule {
            ExtractRule::Pattern { key, names, .. } => {
                for i in 0..tokens.len() {
                    let Some(w) = &folded[i] else { continue };
                    if !names.contains(w) {
                        continue;
                    }
                    if let (Some(Token::Sep(_)), Some(value)) = (tokens.get(i + 1), tokens.get(i + 2)) {
                        if let Some(v) = value.text() {
                            push_unique(&mut out, key, v);
                        }
                    }
                }
            }
            ExtractRule::Term { words, emit, .. } => {
                let hit = folded.windows(words.len()).any(|w| w.iter().zip(words).all(|(a, b)| a.as_deref() == Some(b)));
                if hit {
                    for (k, v) in emit {
                        push_unique(&mut out, k, v);
                    }
                }
            }
        }
    }
    out
}

impl ApplyRule {
    pub fn selects(&self, view: &ObjectView) -> bool {
        if let Some(g) = &self.glob {
            if !g.is_match(view.glob_subject()) {
                return false;
            }
        }
        match &self.query {
            Some(q) => q.matches(view.scalars()),
            None => true,
        }
    }
}

/// Dictionary pairs for every apply rule whose selector matches the view.
pub fn apply(view: &ObjectView, d: &DataDictionary) -> Vec<(String, String)> {
    let mut out = Vec::new();
    for rule in &d.apply_rules {
        if rule.selects(view) {
            for (k, v) in &rule.emit {
                push_unique(&mut out, k, v);
            }
        }
    }
    out
}
