//! Core of the relational distributed object store.

pub mod canonical;
pub mod cluster;
pub mod error;
pub mod graph;
pub mod index;
pub mod model;
pub mod pipeline;
pub mod sim;
pub mod storage;
pub mod tenancy;

pub use error::{Error, Result};
