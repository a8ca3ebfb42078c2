use serde::Serialize;

use super::sink::{AbortReason, ChunkSink};
use crate::domain::map_record;
use crate::rowsource::{Batch, RowSource};
use crate::serializers::{ExportContext, RecordSerializer};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "UPPERCASE")]
pub enum Outcome {
    Complete,
    Aborted,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum EngineKind {
    Buffered,
    Streaming,
}

impl std::fmt::Display for EngineKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            EngineKind::Buffered => "buffered",
            EngineKind::Streaming => "streaming",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct PipelineReport {
    pub rows_processed: u64,
    /// Bytes accepted by the sink.
    pub bytes_written: u64,
    pub outcome: Outcome,
    pub abort_reason: Option<AbortReason>,
    /// Largest amount of serialized output held by the engine at once.
    pub peak_buffer_bytes: usize,
}

struct Run<'a> {
    sink: &'a mut dyn ChunkSink,
    rows: u64,
    bytes: u64,
    peak: usize,
}

impl Run<'_> {
    fn emit(&mut self, buf: &mut Vec<u8>) -> Result<(), AbortReason> {
        self.peak = self.peak.max(buf.len());
        self.sink.write(buf)?;
        self.bytes += buf.len() as u64;
        buf.clear();
        Ok(())
    }

    fn report(self, result: Result<(), AbortReason>) -> PipelineReport {
        let (outcome, abort_reason) = match result {
            Ok(()) => (Outcome::Complete, None),
            Err(r) => {
                self.sink.abort(&r);
                (Outcome::Aborted, Some(r))
            }
        };
        PipelineReport {
            rows_processed: self.rows,
            bytes_written: self.bytes,
            outcome,
            abort_reason,
            peak_buffer_bytes: self.peak,
        }
    }
}

fn fetch(source: &mut impl RowSource) -> Result<Batch, AbortReason> {
    source.fetch_batch().map_err(|e| AbortReason::SourceFailed { delivered: e.delivered, message: e.reason })
}

/// Streams an export: header first, then one sink write per record as each
/// batch is drained, then the trailer. At most one batch of rows and one
/// phase's bytes are held at a time. The source is always closed.
pub fn run_streaming<S: RowSource>(
    mut source: S,
    serializer: &mut dyn RecordSerializer,
    ctx: &ExportContext,
    sink: &mut dyn ChunkSink,
) -> PipelineReport {
    let mut run = Run { sink, rows: 0, bytes: 0, peak: 0 };
    let mut buf = Vec::with_capacity(2048);
    let result = (|| {
        serializer.write_header(ctx, &mut buf);
        run.emit(&mut buf)?;
        run.sink.flush()?;
        loop {
            let batch = fetch(&mut source)?;
            if batch.is_empty() {
                break;
            }
            for row in batch.iter() {
                serializer.write_record(&map_record(row), &mut buf);
                run.emit(&mut buf)?;
                run.rows += 1;
                run.sink.rows_processed(run.rows);
            }
            run.sink.flush()?;
        }
        let summary = serializer.summary();
        serializer.write_trailer(&summary, &mut buf);
        run.emit(&mut buf)?;
        run.sink.finish()?;
        Ok(())
    })();
    source.close();
    run.report(result)
}

/// Reference engine: drains the source into memory, serializes the whole
/// payload into one buffer, then hands it to the sink in a single write. A
/// failure before that write leaves the sink untouched.
pub fn run_buffered<S: RowSource>(
    mut source: S,
    serializer: &mut dyn RecordSerializer,
    ctx: &ExportContext,
    sink: &mut dyn ChunkSink,
) -> PipelineReport {
    let mut run = Run { sink, rows: 0, bytes: 0, peak: 0 };
    let result = (|| {
        let mut batches = Vec::new();
        loop {
            let batch = fetch(&mut source)?;
            if batch.is_empty() {
                break;
            }
            batches.push(batch);
        }
        let mut payload = Vec::new();
        serializer.write_header(ctx, &mut payload);
        for row in batches.iter().flat_map(|b| b.iter()) {
            serializer.write_record(&map_record(row), &mut payload);
            run.rows += 1;
            run.sink.rows_processed(run.rows);
        }
        let summary = serializer.summary();
        serializer.write_trailer(&summary, &mut payload);
        run.emit(&mut payload)?;
        run.sink.finish()?;
        Ok(())
    })();
    source.close();
    run.report(result)
}

/// Dispatches to the engine named by `kind`.
pub fn run_engine<S: RowSource>(
    kind: EngineKind,
    source: S,
    serializer: &mut dyn RecordSerializer,
    ctx: &ExportContext,
    sink: &mut dyn ChunkSink,
) -> PipelineReport {
    match kind {
        EngineKind::Buffered => run_buffered(source, serializer, ctx, sink),
        EngineKind::Streaming => run_streaming(source, serializer, ctx, sink),
    }
}
