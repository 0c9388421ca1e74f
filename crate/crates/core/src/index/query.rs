//! Predicate query language.
//!
//! ```text
//! expr   := term (('AND' | 'OR') term)*      AND binds tighter than OR
//! term   := 'NOT'? (clause | '(' expr ')')
//! clause := key op value
//! op     := = | != | < | <= | > | >= | PREFIX
//! ```
//!
//! Keywords are case-insensitive; keys and operators are case-sensitive.
//! Values containing whitespace, parentheses or quotes are written in double
//! quotes with `\"` and `\\` escapes. A key of the form `partition.key`
//! additionally matches `key` inside that partition only.

use std::cmp::Ordering;
use std::collections::BTreeSet;
use std::fmt;

use serde::{Deserialize, Deserializer, Serialize, Serializer};

use super::decimal::Decimal;
use crate::error::{Error, Result};

pub const MAX_DEPTH: usize = 32;
pub const MAX_CLAUSES: usize = 256;

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum CmpOp {
    #[serde(rename = "=")]
    Eq,
    #[serde(rename = "!=")]
    Ne,
    #[serde(rename = "<")]
    Lt,
    #[serde(rename = "<=")]
    Le,
    #[serde(rename = ">")]
    Gt,
    #[serde(rename = ">=")]
    Ge,
    #[serde(rename = "PREFIX")]
    Prefix,
}

impl CmpOp {
    pub fn as_str(self) -> &'static str {
        match self {
            CmpOp::Eq => "=",
            CmpOp::Ne => "!=",
            CmpOp::Lt => "<",
            CmpOp::Le => "<=",
            CmpOp::Gt => ">",
            CmpOp::Ge => ">=",
            CmpOp::Prefix => "PREFIX",
        }
    }

    pub const ALL: [CmpOp; 7] = [CmpOp::Eq, CmpOp::Ne, CmpOp::Lt, CmpOp::Le, CmpOp::Gt, CmpOp::Ge, CmpOp::Prefix];
}

#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct Clause {
    pub key: String,
    pub op: CmpOp,
    pub value: String,
}

impl Clause {
    pub fn new(key: impl Into<String>, op: CmpOp, value: impl Into<String>) -> Self {
        Self { key: key.into(), op, value: value.into() }
    }

    /// Whether the pair `key = value` stored in `partition` satisfies this clause.
    pub fn matches_pair(&self, partition: &str, key: &str, value: &str) -> bool {
        self.addresses(partition, key) && op_holds(self.op, value, &self.value)
    }

    pub fn addresses(&self, partition: &str, key: &str) -> bool {
        if self.key == key {
            return true;
        }
        match self.key.split_once('.') {
            Some((p, k)) => p == partition && k == key,
            None => false,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub enum QueryExpr {
    Clause(Clause),
    And(Vec<QueryExpr>),
    Or(Vec<QueryExpr>),
    Not(Box<QueryExpr>),
}

/// Order two scalars: numerically when both parse as decimals, otherwise
/// bytewise.
pub fn compare_scalars(a: &str, b: &str) -> Ordering {
    match (Decimal::parse(a), Decimal::parse(b)) {
        (Some(x), Some(y)) => x.cmp(&y),
        _ => a.as_bytes().cmp(b.as_bytes()),
    }
}

pub fn op_holds(op: CmpOp, value: &str, operand: &str) -> bool {
    match op {
        CmpOp::Prefix => value.as_bytes().starts_with(operand.as_bytes()),
        CmpOp::Eq => compare_scalars(value, operand) == Ordering::Equal,
        CmpOp::Ne => compare_scalars(value, operand) != Ordering::Equal,
        CmpOp::Lt => compare_scalars(value, operand) == Ordering::Less,
        CmpOp::Le => compare_scalars(value, operand) != Ordering::Greater,
        CmpOp::Gt => compare_scalars(value, operand) == Ordering::Greater,
        CmpOp::Ge => compare_scalars(value, operand) != Ordering::Less,
    }
}

impl QueryExpr {
    pub fn clause(key: &str, op: CmpOp, value: &str) -> Self {
        QueryExpr::Clause(Clause::new(key, op, value))
    }

    pub fn depth(&self) -> usize {
        match self {
            QueryExpr::Clause(_) => 1,
            QueryExpr::Not(e) => 1 + e.depth(),
            QueryExpr::And(v) | QueryExpr::Or(v) => 1 + v.iter().map(|e| e.depth()).max().unwrap_or(0),
        }
    }

    pub fn clause_count(&self) -> usize {
        match self {
            QueryExpr::Clause(_) => 1,
            QueryExpr::Not(e) => e.clause_count(),
            QueryExpr::And(v) | QueryExpr::Or(v) => v.iter().map(|e| e.clause_count()).sum(),
        }
    }

    pub fn clauses(&self) -> Vec<&Clause> {
        let mut out = Vec::new();
        self.collect_clauses(&mut out);
        out
    }

    fn collect_clauses<'a>(&'a self, out: &mut Vec<&'a Clause>) {
        match self {
            QueryExpr::Clause(c) => out.push(c),
            QueryExpr::Not(e) => e.collect_clauses(out),
            QueryExpr::And(v) | QueryExpr::Or(v) => v.iter().for_each(|e| e.collect_clauses(out)),
        }
    }

    /// Keys referenced anywhere in the expression.
    pub fn keys(&self) -> BTreeSet<String> {
        self.clauses().into_iter().map(|c| c.key.clone()).collect()
    }

    /// Evaluate directly against `(partition, key, value)` triples.
    pub fn matches<'a, I>(&self, scalars: I) -> bool
    where
        I: IntoIterator<Item = (&'a str, &'a str, &'a str)>,
    {
        let triples: Vec<(&str, &str, &str)> = scalars.into_iter().collect();
        self.matches_slice(&triples)
    }

    pub fn matches_slice(&self, scalars: &[(&str, &str, &str)]) -> bool {
        match self {
            QueryExpr::Clause(c) => scalars.iter().any(|(p, k, v)| c.matches_pair(p, k, v)),
            QueryExpr::And(v) => v.iter().all(|e| e.matches_slice(scalars)),
            QueryExpr::Or(v) => v.iter().any(|e| e.matches_slice(scalars)),
            QueryExpr::Not(e) => !e.matches_slice(scalars),
        }
    }
}

fn needs_quotes(v: &str) -> bool {
    v.is_empty()
        || v.starts_with(['=', '!', '<', '>'])
        || v.chars().any(|c| c.is_whitespace() || c == '(' || c == ')' || c == '"' || c == '\\')
}

fn write_value(f: &mut fmt::Formatter<'_>, v: &str) -> fmt::Result {
    if !needs_quotes(v) {
        return f.write_str(v);
    }
    f.write_str("\"")?;
    for c in v.chars() {
        if c == '"' || c == '\\' {
            f.write_str("\\")?;
        }
        write!(f, "{c}")?;
    }
    f.write_str("\"")
}

fn write_child(f: &mut fmt::Formatter<'_>, e: &QueryExpr) -> fmt::Result {
    match e {
        QueryExpr::Clause(_) | QueryExpr::Not(_) => write!(f, "{e}"),
        _ => write!(f, "({e})"),
    }
}

impl fmt::Display for QueryExpr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            QueryExpr::Clause(c) => {
                f.write_str(&c.key)?;
                if c.op == CmpOp::Prefix {
                    f.write_str(" PREFIX ")?;
                } else {
                    f.write_str(c.op.as_str())?;
                }
                write_value(f, &c.value)
            }
            QueryExpr::Not(e) => {
                f.write_str("NOT ")?;
                match e.as_ref() {
                    QueryExpr::Clause(_) => write!(f, "{e}"),
                    _ => write!(f, "({e})"),
                }
            }
            QueryExpr::And(v) | QueryExpr::Or(v) => {
                let sep = if matches!(self, QueryExpr::And(_)) { " AND " } else { " OR " };
                for (i, e) in v.iter().enumerate() {
                    if i > 0 {
                        f.write_str(sep)?;
                    }
                    write_child(f, e)?;
                }
                Ok(())
            }
        }
    }
}

impl Serialize for QueryExpr {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.serialize_str(&self.to_string())
    }
}

impl<'de> Deserialize<'de> for QueryExpr {
    fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        parse_query(&s).map_err(serde::de::Error::custom)
    }
}

/// Whether `key` can be written bare in a clause.
pub fn valid_key(key: &str) -> bool {
    !key.is_empty()
        && !["AND", "OR", "NOT"].iter().any(|k| key.eq_ignore_ascii_case(k))
        && key.chars().all(|c| !c.is_whitespace() && !is_special(c))
}

fn is_special(c: char) -> bool {
    matches!(c, '(' | ')' | '=' | '!' | '<' | '>' | '"' | '\\')
}

struct Parser<'a> {
    src: &'a str,
    pos: usize,
    nesting: usize,
}

fn err(position: usize, message: impl Into<String>) -> Error {
    Error::Parse { position, message: message.into() }
}

pub fn parse_query(text: &str) -> Result<QueryExpr> {
    let mut p = Parser { src: text, pos: 0, nesting: 0 };
    let e = p.expr()?;
    p.skip_ws();
    if p.pos < text.len() {
        return Err(err(p.pos, "unexpected input"));
    }
    if e.depth() > MAX_DEPTH {
        return Err(err(0, format!("expression depth {} exceeds {MAX_DEPTH}", e.depth())));
    }
    if e.clause_count() > MAX_CLAUSES {
        return Err(err(0, format!("{} clauses exceed {MAX_CLAUSES}", e.clause_count())));
    }
    Ok(e)
}

impl<'a> Parser<'a> {
    fn rest(&self) -> &'a str {
        &self.src[self.pos..]
    }

    fn peek(&self) -> Option<char> {
        self.rest().chars().next()
    }

    fn skip_ws(&mut self) {
        while let Some(c) = self.peek() {
            if !c.is_whitespace() {
                break;
            }
            self.pos += c.len_utf8();
        }
    }

    /// The bare word at the cursor (not consumed).
    fn word(&self) -> &'a str {
        let r = self.rest();
        let end = r.find(|c: char| c.is_whitespace() || is_special(c)).unwrap_or(r.len());
        &r[..end]
    }

    fn keyword(&mut self, kw: &str) -> bool {
        self.skip_ws();
        let w = self.word();
        if w.eq_ignore_ascii_case(kw) {
            self.pos += w.len();
            true
        } else {
            false
        }
    }

    fn expr(&mut self) -> Result<QueryExpr> {
        let mut ors = vec![self.and()?];
        while self.keyword("OR") {
            ors.push(self.and()?);
        }
        Ok(if ors.len() == 1 { ors.pop().unwrap() } else { QueryExpr::Or(ors) })
    }

    fn and(&mut self) -> Result<QueryExpr> {
        let mut ands = vec![self.term()?];
        while self.keyword("AND") {
            ands.push(self.term()?);
        }
        Ok(if ands.len() == 1 { ands.pop().unwrap() } else { QueryExpr::And(ands) })
    }

    fn term(&mut self) -> Result<QueryExpr> {
        let negate = self.keyword("NOT");
        self.skip_ws();
        let inner = if self.peek() == Some('(') {
            let open = self.pos;
            self.nesting += 1;
            if self.nesting > MAX_DEPTH {
                return Err(err(open, format!("nesting exceeds {MAX_DEPTH}")));
            }
            self.pos += 1;
            let e = self.expr()?;
            self.skip_ws();
            if self.peek() != Some(')') {
                return Err(err(self.pos, "expected ')'"));
            }
            self.pos += 1;
            self.nesting -= 1;
            e
        } else {
            QueryExpr::Clause(self.clause()?)
        };
        Ok(if negate { QueryExpr::Not(Box::new(inner)) } else { inner })
    }

    fn clause(&mut self) -> Result<Clause> {
        self.skip_ws();
        let start = self.pos;
        let key = self.word();
        if key.is_empty() {
            return Err(err(start, if self.pos == self.src.len() { "expected key at end of input" } else { "expected key" }));
        }
        if ["AND", "OR", "NOT"].iter().any(|k| key.eq_ignore_ascii_case(k)) {
            return Err(err(start, format!("keyword {key:?} where a key was expected")));
        }
        self.pos += key.len();
        self.skip_ws();
        let op_pos = self.pos;
        let r = self.rest();
        let op = if r.starts_with("!=") {
            self.pos += 2;
            CmpOp::Ne
        } else if r.starts_with("<=") {
            self.pos += 2;
            CmpOp::Le
        } else if r.starts_with(">=") {
            self.pos += 2;
            CmpOp::Ge
        } else if r.starts_with('=') {
            self.pos += 1;
            CmpOp::Eq
        } else if r.starts_with('<') {
            self.pos += 1;
            CmpOp::Lt
        } else if r.starts_with('>') {
            self.pos += 1;
            CmpOp::Gt
        } else if self.word() == "PREFIX" {
            self.pos += "PREFIX".len();
            CmpOp::Prefix
        } else {
            return Err(err(op_pos, "expected operator"));
        };
        self.skip_ws();
        let value = self.value()?;
        Ok(Clause { key: key.to_string(), op, value })
    }

    fn value(&mut self) -> Result<String> {
        let start = self.pos;
        match self.peek() {
            None => Err(err(start, "expected value")),
            Some(')') => Err(err(start, "expected value")),
            Some('"') => {
                self.pos += 1;
                let mut out = String::new();
                loop {
                    let Some(c) = self.peek() else {
                        return Err(err(start, "unterminated quoted value"));
                    };
                    self.pos += c.len_utf8();
                    match c {
                        '"' => return Ok(out),
                        '\\' => {
                            let Some(n) = self.peek() else {
                                return Err(err(start, "unterminated quoted value"));
                            };
                            if n != '"' && n != '\\' {
                                return Err(err(self.pos - 1, "unknown escape"));
                            }
                            self.pos += 1;
                            out.push(n);
                        }
                        c => out.push(c),
                    }
                }
            }
            Some(c) if matches!(c, '=' | '!' | '<' | '>' | '(' | '\\') => Err(err(start, "unexpected character in value")),
            Some(_) => {
                let r = self.rest();
                let end = r.find(|c: char| c.is_whitespace() || c == '(' || c == ')' || c == '"').unwrap_or(r.len());
                self.pos += end;
                Ok(r[..end].to_string())
            }
        }
    }
}
