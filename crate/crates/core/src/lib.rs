//! Streaming export of financial transactions.
//!
//! Rows flow from a forward-only [`rowsource::Cursor`] through a per-format
//! [`serializers::RecordSerializer`] into a [`pipeline::ChunkSink`], one record
//! at a time. A buffered engine that assembles the whole payload first is
//! kept alongside as a reference and a baseline. The [`verify`] module parses
//! emitted files back and tells complete exports from truncated ones.

pub mod domain;
pub mod pipeline;
pub mod rowsource;
pub mod serializers;
pub mod verify;
