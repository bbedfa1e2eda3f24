//! HTTP service and command-line front end for the `vidtint` toolkit.

pub mod adapters;
pub mod api;
pub mod cli;
pub mod error;
pub mod jobs;
pub mod store;

pub use error::{Result, ServiceError};
