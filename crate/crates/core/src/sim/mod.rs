//! Deterministic simulation of clusters under faults.

pub mod checks;
pub mod corpus;
pub mod fixture;
pub mod runner;
pub mod scenario;
pub mod trace;

pub use checks::{check_invariants, InvariantViolation};
pub use fixture::{node_layout, Fixture};
pub use runner::{geo_summary, run_scenario, run_scenario_seeded, World};
pub use scenario::{Check, Event, Scenario};
pub use trace::{ClientOp, MsgKind, ReadOutcome, Trace, TraceEvent, TraceKind};
