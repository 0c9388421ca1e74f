use rdos_core::Error;

use crate::support::{self, Env, Shape};

const STREAM: u64 = 100 << 20;

pub fn run() -> Result<String, String> {
    let env = Env::new(Shape::default());
    support::object_roundtrip(&env)?;
    support::versions_and_tombstones(&env)?;
    support::annotations(&env)?;
    support::insurance_query_and_graph(&env)?;
    support::admin_endpoints(&env)?;
    let mut seen = support::error_codes(&env)?;
    support::small_cluster_codes(&mut seen)?;
    let missing: Vec<_> =
        Error::ALL_CODES.iter().filter(|c| !seen.contains(**c) && !support::UNREACHABLE.contains(c)).collect();
    if !missing.is_empty() {
        return Err(format!("error codes never produced: {missing:?}"));
    }
    support::streamed_blob(&env, STREAM)?;
    Ok(format!("all endpoints conform; {} error codes provoked; 100 MiB streamed byte-identical", seen.len()))
}
