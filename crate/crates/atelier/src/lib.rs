//! Local session service for the atelier pipeline: draft ingestion, the
//! on-disk session store and archive format, the privacy guard, the model
//! sidecar protocol, the `/v1` HTTP API and the corpus reproduction tool.
//!
//! The pure pipeline lives in [`atelier_core`], re-exported as [`core`].

pub use atelier_core as core;

pub mod archive;
pub mod codec;
pub mod config;
pub mod corpus;
pub mod ingest;
pub mod manifest;
pub mod privacy;
pub mod queue;
pub mod service;
pub mod sidecar;
pub mod store;
pub mod studio;

pub use config::ServiceConfig;
pub use studio::{ErrorClass, Studio, StudioError};
