use std::collections::BTreeMap;
use std::time::{Duration, Instant};

use rdos_core::sim::{check_invariants, run_scenario_seeded, ClientOp, Scenario, TraceKind};

const RUNS: u64 = 500;
const BUDGET: Duration = Duration::from_secs(120);

pub fn run() -> Result<String, String> {
    let sc = Scenario::parse(
        br#"{"name":"durability","nodes":8,"fault_domains":3,"replicas":3,
            "script":[{"event":"workload","ops":200,"crashes":true}],
            "checks":["durability","read_your_writes"]}"#,
    )
    .map_err(|e| e.to_string())?;
    let start = Instant::now();
    let (mut acked, mut reads, mut singles, mut doubles) = (0usize, 0usize, 0usize, 0usize);
    for seed in 0..RUNS {
        let trace = run_scenario_seeded(&sc, seed).map_err(|e| format!("seed {seed}: {e}"))?;
        let mut crashes_at: BTreeMap<u64, usize> = BTreeMap::new();
        for e in trace.iter() {
            match &e.kind {
                TraceKind::Ack { op: ClientOp::Put, .. } => acked += 1,
                TraceKind::Read { .. } => reads += 1,
                TraceKind::Crash { .. } => *crashes_at.entry(e.tick).or_default() += 1,
                _ => {}
            }
        }
        singles += crashes_at.values().filter(|c| **c == 1).count();
        doubles += crashes_at.values().filter(|c| **c >= 2).count();
        let v = check_invariants(&trace, &sc.checks);
        if let Some(first) = v.first() {
            return Err(format!("seed {seed}: {} violations, first: {first:?}", v.len()));
        }
    }
    let took = start.elapsed();
    if doubles == 0 || singles == 0 {
        return Err(format!("crash model exercised {singles} single and {doubles} double crashes"));
    }
    if took > BUDGET {
        return Err(format!("{RUNS} runs took {:.1}s, budget {}s", took.as_secs_f64(), BUDGET.as_secs()));
    }
    Ok(format!(
        "{RUNS} runs, {acked} acknowledged puts, {reads} reads, {singles} single / {doubles} double crashes, 0 lost, {:.1}s",
        took.as_secs_f64()
    ))
}
