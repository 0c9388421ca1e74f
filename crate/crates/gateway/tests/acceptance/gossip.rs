use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rdos_core::cluster::{DetectorConfig, MembershipTable, NodeId, NodeInfo, NodeState};
use rdos_core::sim::{check_invariants, run_scenario_seeded, Check, Scenario, TraceKind};

const SEEDS: u64 = 5;

fn bound(n: usize) -> u64 {
    // ceil(log2 n) + 4
    let n = n.max(1) as u64;
    (64 - (n - 1).leading_zeros()) as u64 + 4
}

fn convergence() -> Result<(u64, usize), String> {
    let mut worst_slack = u64::MAX;
    let mut runs = 0;
    for n in 2..=32usize {
        for (seeding, script) in [("introducer", r#"[{"event":"tick","n":20}]"#), ("full", r#"[{"event":"join","node":100,"fault_domain":"d1"},{"event":"tick","n":20}]"#)] {
            let sc = Scenario::parse(
                format!(r#"{{"name":"conv","nodes":{n},"seeding":"{seeding}","script":{script},"checks":["gossip_convergence"]}}"#)
                    .as_bytes(),
            )
            .map_err(|e| e.to_string())?;
            for seed in 0..SEEDS {
                let trace = run_scenario_seeded(&sc, seed).map_err(|e| e.to_string())?;
                let members = if seeding == "full" { n + 1 } else { n };
                let epoch = trace
                    .iter()
                    .filter(|e| matches!(e.kind, TraceKind::GossipEpoch { .. }))
                    .map(|e| e.tick)
                    .last()
                    .ok_or(format!("n={n} {seeding}: no membership epoch"))?;
                let done = trace
                    .iter()
                    .find(|e| e.tick >= epoch && matches!(e.kind, TraceKind::GossipConverged { .. }))
                    .map(|e| e.tick)
                    .ok_or(format!("n={n} {seeding} seed {seed}: never converged"))?;
                let took = done - epoch;
                if took > bound(members) {
                    return Err(format!("n={members} {seeding} seed {seed}: {took} ticks, bound {}", bound(members)));
                }
                let v = check_invariants(&trace, &[Check::GossipConvergence]);
                if !v.is_empty() {
                    return Err(format!("n={members} {seeding} seed {seed}: {v:?}"));
                }
                worst_slack = worst_slack.min(bound(members) - took);
                runs += 1;
            }
        }
    }
    Ok((worst_slack, runs))
}

/// A peer heartbeats until `alive_until`, then goes silent; the observer
/// must move it to SUSPECT and FAILED at exactly the configured ticks.
fn thresholds(cfg: DetectorConfig, alive_until: u64) -> Result<(), String> {
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    let info = |id| NodeInfo::new(NodeId(id), "", "d0");
    let mut obs = MembershipTable::new(info(1));
    let mut peer = MembershipTable::new(info(2));
    obs.add_seed(info(2));
    peer.add_seed(info(1));
    let (mut suspect_at, mut failed_at) = (None, None);
    for t in 0..=alive_until + cfg.t_fail + 5 {
        obs.gossip_tick(t, &mut rng, 1);
        if t <= alive_until {
            peer.gossip_tick(t, &mut rng, 1);
            obs.merge_digest(&peer.digest());
        }
        for tr in obs.detect_failures(t, cfg) {
            match tr.to {
                NodeState::Suspect => suspect_at = suspect_at.or(Some(t)),
                NodeState::Failed => failed_at = failed_at.or(Some(t)),
                NodeState::Active => return Err("spurious recovery".into()),
            }
        }
    }
    let want = (Some(alive_until + cfg.t_suspect), Some(alive_until + cfg.t_fail));
    if (suspect_at, failed_at) != want {
        return Err(format!("{cfg:?} silent from {alive_until}: transitions at {:?}, expected {want:?}", (suspect_at, failed_at)));
    }
    Ok(())
}

pub fn run() -> Result<String, String> {
    let (slack, runs) = convergence()?;
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let mut cases = 0;
    for ts in 1..=6 {
        for tf in ts + 1..=ts + 6 {
            thresholds(DetectorConfig { t_suspect: ts, t_fail: tf }, rng.gen_range(0..20))?;
            cases += 1;
        }
    }
    for _ in 0..200 {
        let ts = rng.gen_range(1..30);
        let tf = rng.gen_range(ts + 1..ts + 40);
        thresholds(DetectorConfig { t_suspect: ts, t_fail: tf }, rng.gen_range(0..50))?;
        cases += 1;
    }
    Ok(format!(
        "{runs} lossless runs (2..=32 nodes, bootstrap and join) within ceil(log2 n)+4, min slack {slack}; {cases} detector configs exact"
    ))
}
