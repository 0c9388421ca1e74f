//! Inverted index over metadata scalars and the predicate query engine.

pub mod decimal;
pub mod query;
pub mod shard;

pub use decimal::Decimal;
pub use query::{compare_scalars, op_holds, parse_query, Clause, CmpOp, QueryExpr};
pub use shard::{IndexEvent, IndexShard, QueryHit, QueryResult};
