//! HTTP gateway and client for the object store.

pub mod client;
pub mod config;
pub mod error;
pub mod server;

pub use error::{status_for, ApiError, ErrorBody};
pub use server::{router, serve, spawn, AppState, ServerHandle};
