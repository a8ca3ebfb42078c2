//! Export engines and the sinks they write to.
//!
//! [`run_streaming`] is the production path. [`run_buffered`] builds the
//! whole payload before its first write and serves as the byte-level oracle
//! and the memory baseline.

mod engine;
pub mod fault;
mod sink;

pub use engine::{run_buffered, run_engine, run_streaming, EngineKind, Outcome, PipelineReport};
pub use fault::{FaultPlan, Gate, GatedRowSource};
pub use sink::{
    first_byte_row, AbortReason, ChunkSink, DiscardSink, InstrumentedSink, NoOutput, SinkError, SinkState, VecSink,
    WriteEvent,
};

use crate::domain::ExportRequest;
use crate::rowsource::{open_cursor, RowSource, StoreError, TransactionStore};
use crate::serializers::{registry_lookup, ExportContext};

/// Runs `kind` over `source` with the serializer and context implied by `req`.
pub fn run_request<S: RowSource>(
    kind: EngineKind,
    source: S,
    req: &ExportRequest,
    sink: &mut dyn ChunkSink,
) -> PipelineReport {
    let mut serializer = registry_lookup(req.format);
    let ctx = ExportContext::for_request(req);
    run_engine(kind, source, serializer.as_mut(), &ctx, sink)
}

/// Opens a cursor on `store` for `req` and runs the export.
pub fn run_export(
    kind: EngineKind,
    store: &TransactionStore,
    req: &ExportRequest,
    sink: &mut dyn ChunkSink,
) -> Result<PipelineReport, StoreError> {
    let cursor = open_cursor(store, req)?;
    Ok(run_request(kind, cursor, req, sink))
}
