use std::cmp::Ordering;
use std::collections::{BTreeMap, BTreeSet};

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rdos_core::index::{Clause, CmpOp, QueryExpr};
use rdos_core::model::{MetadataPartition, ObjectUri};
use rdos_core::sim::Fixture;
use rdos_core::storage::BlobSource;

const OBJECTS: usize = 5000;
const QUERIES: usize = 1000;

const VALUES: &[&str] = &[
    "0", "1", "2", "3", "5", "7", "10", "12", "20", "007", "+3", "-1", "-5", "1.5", "1.50", "2.25", ".5", "10.", "-0.5",
    "alpha", "Alpha", "beta", "b", "ab", "abc", "zeta", "a1", "1a", "x-y",
];
const OPERANDS: &[&str] = &["0", "1", "3", "7", "10", "1.5", "-1", "2", "a", "ab", "alpha", "b", "z", "1a", "-"];

type Doc = BTreeMap<String, BTreeMap<String, String>>;

/// Decimal value of `s` if it is written as `[+-]digits[.digits]`.
fn number(s: &str) -> Option<f64> {
    let body = s.strip_prefix(['+', '-']).unwrap_or(s);
    let digits = body.bytes().filter(u8::is_ascii_digit).count();
    let dots = body.bytes().filter(|b| *b == b'.').count();
    if digits == 0 || dots > 1 || digits + dots != body.len() {
        return None;
    }
    s.parse().ok()
}

fn compare(a: &str, b: &str) -> Ordering {
    match (number(a), number(b)) {
        (Some(x), Some(y)) => x.partial_cmp(&y).unwrap(),
        _ => a.as_bytes().cmp(b.as_bytes()),
    }
}

fn holds(c: &Clause, v: &str) -> bool {
    let o = compare(v, &c.value);
    match c.op {
        CmpOp::Eq => o == Ordering::Equal,
        CmpOp::Ne => o != Ordering::Equal,
        CmpOp::Lt => o == Ordering::Less,
        CmpOp::Le => o != Ordering::Greater,
        CmpOp::Gt => o == Ordering::Greater,
        CmpOp::Ge => o != Ordering::Less,
        CmpOp::Prefix => v.starts_with(c.value.as_str()),
    }
}

fn eval(e: &QueryExpr, doc: &Doc) -> bool {
    match e {
        QueryExpr::Clause(c) => doc.iter().any(|(p, pairs)| {
            pairs.iter().any(|(k, v)| {
                let addressed = c.key == *k || c.key.split_once('.').is_some_and(|(cp, ck)| cp == p && ck == k);
                addressed && holds(c, v)
            })
        }),
        QueryExpr::And(v) => v.iter().all(|x| eval(x, doc)),
        QueryExpr::Or(v) => v.iter().any(|x| eval(x, doc)),
        QueryExpr::Not(x) => !eval(x, doc),
    }
}

fn partition(rng: &mut ChaCha8Rng, name: String) -> MetadataPartition {
    let mut p = MetadataPartition::new(name);
    for _ in 0..rng.gen_range(1..=4) {
        p = p.with(format!("k{}", rng.gen_range(0..6)), *VALUES.choose(rng).unwrap());
    }
    p
}

fn expr(rng: &mut ChaCha8Rng, depth: usize) -> QueryExpr {
    let leaf = depth == 0 || rng.gen_bool(0.45);
    if leaf {
        let k = rng.gen_range(0..7);
        let key = if rng.gen_bool(0.25) { format!("p{}.k{k}", rng.gen_range(0..4)) } else { format!("k{k}") };
        return QueryExpr::clause(&key, *CmpOp::ALL.choose(rng).unwrap(), OPERANDS.choose(rng).unwrap());
    }
    match rng.gen_range(0..3) {
        0 => QueryExpr::Not(Box::new(expr(rng, depth - 1))),
        1 => QueryExpr::And((0..rng.gen_range(2..=3)).map(|_| expr(rng, depth - 1)).collect()),
        _ => QueryExpr::Or((0..rng.gen_range(2..=3)).map(|_| expr(rng, depth - 1)).collect()),
    }
}

pub fn run() -> Result<String, String> {
    let f = Fixture::simple(3, 3, 1);
    let (ns, admin) = f.namespace("acme", "q");
    let mut rng = ChaCha8Rng::seed_from_u64(33);
    for i in 0..OBJECTS {
        let names: BTreeSet<usize> = (0..rng.gen_range(0..=3)).map(|_| rng.gen_range(0..4)).collect();
        let parts = names.into_iter().map(|n| partition(&mut rng, format!("p{n}"))).collect();
        let u = ns.uri(&format!("obj/{i:05}")).unwrap();
        f.store.put_object(&admin, &u, &BlobSource::bytes(format!("{i}").as_bytes()), parts).map_err(|e| e.to_string())?;
    }
    // churn: replace, remove and tombstone so the postings see every event kind
    for _ in 0..1500 {
        let u = ns.uri(&format!("obj/{:05}", rng.gen_range(0..OBJECTS))).unwrap();
        let p = rng.gen_range(0..4);
        let _ = match rng.gen_range(0..10) {
            0..=5 => f.store.put_annotation(&admin, &u, partition(&mut rng, format!("p{p}"))).map(|_| ()),
            6..=7 => f.store.delete_annotation(&admin, &u, &format!("p{p}")).map(|_| ()),
            _ => f.store.delete_object(&admin, &u).map(|_| ()),
        };
    }
    // brute force scans the durable records, not the index
    let docs: BTreeMap<ObjectUri, Doc> = f
        .store
        .refdb()
        .iter()
        .filter(|(_, e)| e.is_live())
        .map(|(u, e)| (u.clone(), e.record.partitions.iter().map(|(n, p)| (n.clone(), p.pairs.clone())).collect()))
        .collect();
    let (mut empty, mut nonempty) = (0, 0);
    for q in 0..QUERIES {
        let e = expr(&mut rng, 3);
        let want: BTreeSet<&ObjectUri> = docs.iter().filter(|(_, d)| eval(&e, d)).map(|(u, _)| u).collect();
        let got = f.store.query(&admin, &ns, &e, 0, None).map_err(|x| x.to_string())?;
        let got_set: BTreeSet<&ObjectUri> = got.hits.iter().map(|h| &h.uri).collect();
        if got_set != want || got.total != want.len() {
            let extra: Vec<_> = got_set.difference(&want).take(3).collect();
            let missing: Vec<_> = want.difference(&got_set).take(3).collect();
            return Err(format!("query {q} `{e}`: extra {extra:?}, missing {missing:?}"));
        }
        if want.is_empty() {
            empty += 1;
        } else {
            nonempty += 1;
        }
    }
    Ok(format!("{QUERIES} queries over {} live of {OBJECTS} objects agree ({nonempty} non-empty, {empty} empty)", docs.len()))
}
