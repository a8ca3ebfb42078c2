//! Stateless HTTP front end for the export engine.
//!
//! `GET /v1/accounts/{account_id}/transactions/export` streams an export with
//! chunked transfer coding; `GET /healthz` reports in-flight exports. Invalid
//! requests get a 400 problem document before any export byte, and requests
//! over the concurrency limit get a 429. A failure after the first body byte
//! closes the connection without the final chunk.

pub mod config;
pub mod http;
pub mod log;
mod server;

pub use config::{ConfigError, ConfigFile, ServiceConfig};
pub use log::{LogOutcome, MemoryLogger, RequestLogRecord, RequestLogger, StderrLogger};
pub use server::{content_disposition, ServerBuilder, ServerHandle, ServiceError, SourceWrapper, CORRELATION_HEADER};
