use std::io::Write;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use rdos_core::sim::{check_invariants, run_scenario_seeded, Scenario, Trace};

#[derive(Parser)]
#[command(name = "rdos-sim", about = "Deterministic cluster simulator")]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Run a scenario and print its trace as JSON lines.
    Run {
        scenario: PathBuf,
        /// Overrides the scenario's seed.
        #[arg(long)]
        seed: Option<u64>,
        /// Write the trace here instead of stdout.
        #[arg(long, short)]
        out: Option<PathBuf>,
    },
    /// Evaluate a scenario's checks against a recorded trace.
    Check { scenario: PathBuf, trace: PathBuf },
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(2)
        }
    }
}

fn load(path: &PathBuf) -> Result<Scenario, Box<dyn std::error::Error>> {
    let bytes = std::fs::read(path).map_err(|e| format!("{}: {e}", path.display()))?;
    Ok(Scenario::parse(&bytes)?)
}

fn report(trace: &Trace, sc: &Scenario) -> bool {
    let violations = check_invariants(trace, &sc.checks);
    for v in &violations {
        eprintln!("VIOLATION {:?} at tick {}: {}", v.check, v.tick, v.detail);
    }
    if violations.is_empty() {
        eprintln!("ok: {} events, {} checks passed", trace.len(), sc.checks.len());
    }
    violations.is_empty()
}

fn run(cli: Cli) -> Result<bool, Box<dyn std::error::Error>> {
    match cli.cmd {
        Cmd::Run { scenario, seed, out } => {
            let sc = load(&scenario)?;
            let trace = run_scenario_seeded(&sc, seed.unwrap_or(sc.seed))?;
            let bytes = trace.to_jsonl();
            match out {
                Some(p) => std::fs::write(&p, &bytes)?,
                None => std::io::stdout().lock().write_all(&bytes)?,
            }
            Ok(report(&trace, &sc))
        }
        Cmd::Check { scenario, trace } => {
            let sc = load(&scenario)?;
            let trace = Trace::from_jsonl(&std::fs::read(&trace)?)?;
            Ok(report(&trace, &sc))
        }
    }
}
