//! Acceptance gate: one PASS/FAIL line per criterion, non-zero exit on any
//! failure. Run with `cargo test --test acceptance`.

use std::panic::{catch_unwind, AssertUnwindSafe};
use std::process::ExitCode;
use std::time::Instant;

#[path = "../support/mod.rs"]
mod support;

mod durability;
mod gateway;
mod geo;
mod gossip;
mod graph;
mod laws;
mod mgm;
mod placement;
mod query;
mod scavenger;

type Check = fn() -> Result<String, String>;

const CRITERIA: &[(u32, &str, Check)] = &[
    (1, "durability", durability::run),
    (2, "scavenger equivalence", scavenger::run),
    (3, "query oracle", query::run),
    (4, "mgm examples", mgm::run),
    (5, "pipeline laws", laws::run),
    (6, "graph", graph::run),
    (7, "placement", placement::run),
    (8, "gossip", gossip::run),
    (9, "geo", geo::run),
    (10, "gateway conformance", gateway::run),
];

fn main() -> ExitCode {
    let filter: Vec<u32> = std::env::args().skip(1).filter_map(|a| a.parse().ok()).collect();
    let mut failed = 0;
    for (n, name, check) in CRITERIA {
        if !filter.is_empty() && !filter.contains(n) {
            continue;
        }
        let t = Instant::now();
        let outcome = catch_unwind(AssertUnwindSafe(check)).unwrap_or_else(|p| {
            let msg = p
                .downcast_ref::<String>()
                .cloned()
                .or_else(|| p.downcast_ref::<&str>().map(|s| s.to_string()))
                .unwrap_or_default();
            Err(format!("panicked: {msg}"))
        });
        let secs = t.elapsed().as_secs_f64();
        match outcome {
            Ok(detail) => println!("PASS criterion {n:>2} {name} ({secs:.1}s): {detail}"),
            Err(why) => {
                failed += 1;
                println!("FAIL criterion {n:>2} {name} ({secs:.1}s): {why}");
            }
        }
    }
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        println!("{failed} criteria failed");
        ExitCode::FAILURE
    }
}
