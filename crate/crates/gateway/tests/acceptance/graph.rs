use std::collections::{BTreeMap, BTreeSet, VecDeque};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rdos_core::graph::{Direction, EdgeConstraint, RelationGraph};
use rdos_core::index::{CmpOp, QueryExpr};
use rdos_core::model::{NamespaceId, ObjectUri};

const LABELS: [&str; 2] = ["RelTo", "Cites"];

fn ns() -> NamespaceId {
    NamespaceId::new("lab", "g").unwrap()
}

fn node(i: usize) -> ObjectUri {
    ns().uri(&format!("n{i:02}")).unwrap()
}

struct RandomGraph {
    graph: RelationGraph,
    n: usize,
    /// (from, to, label, weight), one per (from, label, to).
    edges: Vec<(usize, usize, &'static str, f64)>,
}

fn random_graph(rng: &mut ChaCha8Rng, max_nodes: usize) -> RandomGraph {
    let n = rng.gen_range(1..=max_nodes);
    let mut g = RelationGraph::new(ns());
    for i in 0..n {
        g.register_node(node(i));
    }
    let mut edges: BTreeMap<(usize, &str, usize), f64> = BTreeMap::new();
    let m = if n > 1 { rng.gen_range(0..=n * 3) } else { 0 };
    for _ in 0..m {
        let a = rng.gen_range(0..n);
        let b = rng.gen_range(0..n);
        if a == b {
            continue;
        }
        let label = LABELS[rng.gen_range(0..2)];
        let w = rng.gen_range(0..=20) as f64 / 20.0;
        g.upsert_edge(&node(a), &node(b), label, w).unwrap();
        edges.insert((a, label, b), w);
    }
    let edges = edges.into_iter().map(|((a, l, b), w)| (a, b, l, w)).collect();
    RandomGraph { graph: g, n, edges }
}

/// Dense power iteration on the full transition matrix.
fn dense_pagerank(n: usize, edges: &[(usize, usize, &str, f64)], d: f64) -> Vec<f64> {
    let mut m = vec![vec![0.0f64; n]; n]; // m[to][from]
    let mut out_w = vec![0.0f64; n];
    for &(a, b, _, w) in edges {
        m[b][a] += w;
        out_w[a] += w;
    }
    for from in 0..n {
        for row in m.iter_mut() {
            if out_w[from] > 0.0 {
                row[from] /= out_w[from];
            } else {
                row[from] = 1.0 / n as f64;
            }
        }
    }
    let mut r = vec![1.0 / n as f64; n];
    for _ in 0..10_000 {
        let next: Vec<f64> =
            (0..n).map(|i| (1.0 - d) / n as f64 + d * (0..n).map(|j| m[i][j] * r[j]).sum::<f64>()).collect();
        let delta: f64 = next.iter().zip(&r).map(|(a, b)| (a - b).abs()).sum();
        r = next;
        if delta < 1e-15 {
            break;
        }
    }
    r
}

fn incident<'a>(
    edges: &'a [(usize, usize, &'static str, f64)],
    at: usize,
    dir: Direction,
    label: Option<&str>,
) -> impl Iterator<Item = (usize, f64)> + 'a {
    let label = label.map(str::to_string);
    edges.iter().filter_map(move |&(a, b, l, w)| {
        if label.as_deref().is_some_and(|x| x != l) {
            return None;
        }
        match dir {
            Direction::Out if a == at => Some((b, w)),
            Direction::In if b == at => Some((a, w)),
            Direction::Both if a == at => Some((b, w)),
            Direction::Both if b == at => Some((a, w)),
            _ => None,
        }
    })
}

/// Shortest depth of each node within `max_depth`, and every product of
/// weights along a shortest path.
fn bfs_oracle(
    rg: &RandomGraph,
    start: usize,
    max_depth: usize,
    dir: Direction,
    min_w: Option<f64>,
    label: Option<&str>,
) -> BTreeMap<usize, (usize, Vec<f64>)> {
    let mut best: BTreeMap<usize, (usize, Vec<f64>)> = BTreeMap::new();
    best.insert(start, (0, vec![1.0]));
    let mut frontier = VecDeque::from([start]);
    while let Some(x) = frontier.pop_front() {
        let (dx, wx) = best[&x].clone();
        if dx >= max_depth {
            continue;
        }
        for (y, w) in incident(&rg.edges, x, dir, label) {
            if min_w.is_some_and(|m| w < m) {
                continue;
            }
            let products: Vec<f64> = wx.iter().map(|p| p * w).collect();
            match best.get_mut(&y) {
                None => {
                    best.insert(y, (dx + 1, products));
                    frontier.push_back(y);
                }
                Some((dy, ws)) if *dy == dx + 1 => ws.extend(products),
                _ => {}
            }
        }
    }
    best.remove(&start);
    best
}

fn check_pagerank(seed: u64) -> Result<(), String> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let rg = random_graph(&mut rng, 50);
    let s = rg.graph.pagerank(0.85, 1e-13, 10_000).map_err(|e| e.to_string())?;
    let sum: f64 = s.scores.values().sum();
    if (sum - 1.0).abs() > 1e-9 {
        return Err(format!("seed {seed}: sum {sum}"));
    }
    let dense = dense_pagerank(rg.n, &rg.edges, 0.85);
    for i in 0..rg.n {
        let got = s.scores[&node(i)];
        if (got - dense[i]).abs() > 1e-8 {
            return Err(format!("seed {seed}: node {i} score {got} vs dense {}", dense[i]));
        }
    }
    Ok(())
}

fn check_rings() -> Result<(), String> {
    for k in 2..=20 {
        let mut g = RelationGraph::new(ns());
        for i in 0..k {
            g.upsert_edge(&node(i), &node((i + 1) % k), "RelTo", 1.0).unwrap();
        }
        let s = g.pagerank(0.85, 1e-12, 1000).map_err(|e| e.to_string())?;
        for v in s.scores.values() {
            if (v - 1.0 / k as f64).abs() > 1e-9 {
                return Err(format!("{k}-ring score {v}"));
            }
        }
    }
    Ok(())
}

fn check_traverse(seed: u64) -> Result<usize, String> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let rg = random_graph(&mut rng, 30);
    let mut cases = 0;
    for _ in 0..10 {
        let start = rng.gen_range(0..rg.n);
        let depth = rng.gen_range(0..5);
        let dir = [Direction::Out, Direction::In, Direction::Both][rng.gen_range(0..3)];
        let min_w = rng.gen_bool(0.5).then(|| rng.gen_range(0..=10) as f64 / 10.0);
        let label = rng.gen_bool(0.3).then(|| LABELS[rng.gen_range(0..2)]);
        let got = rg.graph.traverse(&node(start), depth, dir, min_w, label);
        let want = bfs_oracle(&rg, start, depth, dir, min_w, label);
        let got_nodes: BTreeSet<String> = got.iter().map(|r| r.node.to_string()).collect();
        let want_nodes: BTreeSet<String> = want.keys().map(|i| node(*i).to_string()).collect();
        if got_nodes != want_nodes || got.len() != want.len() {
            return Err(format!("seed {seed}: traverse reached {got_nodes:?}, oracle {want_nodes:?}"));
        }
        for r in &got {
            let i: usize = r.node.path()[1..].parse().unwrap();
            let (d, ws) = &want[&i];
            if r.depth != *d || !ws.contains(&r.weight) {
                return Err(format!("seed {seed}: {} at depth {} weight {}, oracle {d} {ws:?}", r.node, r.depth, r.weight));
            }
        }
        cases += 1;
    }
    Ok(cases)
}

fn check_class_query(seed: u64) -> Result<usize, String> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let rg = random_graph(&mut rng, 30);
    // every node gets a colour; predicates select by colour
    let colour: Vec<usize> = (0..rg.n).map(|_| rng.gen_range(0..3)).collect();
    let pred = |c: usize| QueryExpr::clause("colour", CmpOp::Eq, &c.to_string());
    let lookup = |q: &QueryExpr| -> BTreeSet<ObjectUri> {
        let QueryExpr::Clause(c) = q else { unreachable!() };
        (0..rg.n).filter(|i| colour[*i].to_string() == c.value).map(node).collect()
    };
    let mut cases = 0;
    for _ in 0..10 {
        let want_colour = rng.gen_range(0..3);
        let constraints: Vec<(Direction, Option<&str>, Option<f64>, usize)> = (0..rng.gen_range(0..=2))
            .map(|_| {
                (
                    [Direction::Out, Direction::In, Direction::Both][rng.gen_range(0..3)],
                    rng.gen_bool(0.5).then(|| LABELS[rng.gen_range(0..2)]),
                    rng.gen_bool(0.5).then(|| rng.gen_range(0..=10) as f64 / 10.0),
                    rng.gen_range(0..3),
                )
            })
            .collect();
        let ec: Vec<EdgeConstraint> = constraints
            .iter()
            .map(|&(direction, label, min_weight, c)| EdgeConstraint {
                direction,
                label: label.map(str::to_string),
                min_weight,
                target: pred(c),
            })
            .collect();
        let got = rg.graph.class_query(lookup, &pred(want_colour), &ec);
        let want: BTreeSet<ObjectUri> = (0..rg.n)
            .filter(|&i| colour[i] == want_colour)
            .filter(|&i| {
                constraints.iter().all(|&(dir, label, min_w, c)| {
                    incident(&rg.edges, i, dir, label).any(|(j, w)| min_w.is_none_or(|m| w >= m) && colour[j] == c)
                })
            })
            .map(node)
            .collect();
        if got != want {
            return Err(format!("seed {seed}: class query {got:?} vs oracle {want:?}"));
        }
        cases += 1;
    }
    Ok(cases)
}

fn check_epidemiology() -> Result<(), String> {
    let g = {
        let mut g = RelationGraph::new(NamespaceId::new("health", "epi").unwrap());
        let u = |p: &str| g.namespace().uri(p).unwrap();
        let (cold, cough, sinus) = (u("cold"), u("cough"), u("sinus"));
        g.upsert_edge(&cold, &cough, "causes", 0.6).unwrap();
        g.upsert_edge(&cold, &sinus, "causes", 0.8).unwrap();
        g
    };
    let cold = g.namespace().uri("cold").unwrap();
    let at = |min: f64| -> Vec<(String, f64)> {
        g.traverse(&cold, 1, Direction::Out, Some(min), Some("causes"))
            .into_iter()
            .map(|r| (r.node.path().to_string(), r.weight))
            .collect()
    };
    if at(0.6) != vec![("cough".to_string(), 0.6), ("sinus".to_string(), 0.8)] {
        return Err(format!("threshold 0.6 must keep the 0.6 cold->cough edge: {:?}", at(0.6)));
    }
    if at(0.61) != vec![("sinus".to_string(), 0.8)] {
        return Err(format!("threshold 0.61 must drop cold->cough: {:?}", at(0.61)));
    }
    let cough = g.neighbors(&cold, Direction::Out, Some("causes"));
    if cough[0].weight != 0.6 {
        return Err("cold->cough weight".into());
    }
    Ok(())
}

pub fn run() -> Result<String, String> {
    for seed in 0..100 {
        check_pagerank(seed)?;
    }
    check_rings()?;
    let mut traversals = 0;
    let mut classes = 0;
    for seed in 0..100 {
        traversals += check_traverse(1000 + seed)?;
        classes += check_class_query(2000 + seed)?;
    }
    check_epidemiology()?;
    Ok(format!(
        "100 random graphs match dense PageRank within 1e-8; k-rings uniform; {traversals} traversals and {classes} class queries match brute force; epidemiology 0.6 edge held"
    ))
}
