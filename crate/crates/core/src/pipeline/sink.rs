use std::fmt;
use std::time::{Duration, Instant};

use serde::Serialize;

/// Why a sink refused bytes.
#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum SinkError {
    #[error("consumer closed the stream")]
    Closed,
    #[error("write stalled past the timeout")]
    Timeout,
    #[error("export exceeded its duration limit")]
    DurationExceeded,
    #[error("sink already finished or aborted")]
    Ended,
    #[error("sink i/o error: {0}")]
    Io(String),
}

/// Terminal reason recorded for an aborted export.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum AbortReason {
    SourceFailed { delivered: u64, message: String },
    SinkClosed,
    WriteTimeout,
    DurationExceeded,
    SinkFailed(String),
}

impl AbortReason {
    /// Stable short code used in logs.
    pub fn code(&self) -> &'static str {
        match self {
            AbortReason::SourceFailed { .. } => "cursor_error",
            AbortReason::SinkClosed => "sink_closed",
            AbortReason::WriteTimeout => "write_timeout",
            AbortReason::DurationExceeded => "duration_exceeded",
            AbortReason::SinkFailed(_) => "sink_error",
        }
    }
}

impl fmt::Display for AbortReason {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            AbortReason::SourceFailed { delivered, message } => {
                write!(f, "cursor_error: after {delivered} rows: {message}")
            }
            AbortReason::SinkFailed(m) => write!(f, "sink_error: {m}"),
            other => f.write_str(other.code()),
        }
    }
}

impl Serialize for AbortReason {
    fn serialize<S: serde::Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.collect_str(self)
    }
}

impl From<SinkError> for AbortReason {
    fn from(e: SinkError) -> Self {
        match e {
            SinkError::Closed => AbortReason::SinkClosed,
            SinkError::Timeout => AbortReason::WriteTimeout,
            SinkError::DurationExceeded => AbortReason::DurationExceeded,
            SinkError::Ended => AbortReason::SinkFailed("write after end of stream".into()),
            SinkError::Io(m) => AbortReason::SinkFailed(m),
        }
    }
}

/// Write target for serialized bytes. `write` may block; that blocking is the
/// flow control between a slow consumer and the engine.
///
/// After `finish` or `abort`, writes fail with [`SinkError::Ended`].
pub trait ChunkSink {
    fn write(&mut self, bytes: &[u8]) -> Result<(), SinkError>;

    /// Hint that a batch boundary was reached and buffered bytes should be
    /// pushed to the consumer.
    fn flush(&mut self) -> Result<(), SinkError> {
        Ok(())
    }

    /// Successful end of stream.
    fn finish(&mut self) -> Result<(), SinkError>;

    /// Unsuccessful end of stream. Must not fail.
    fn abort(&mut self, reason: &AbortReason);

    /// Progress notification: rows fully processed by the engine so far.
    fn rows_processed(&mut self, _rows: u64) {}
}

impl<S: ChunkSink + ?Sized> ChunkSink for &mut S {
    fn write(&mut self, bytes: &[u8]) -> Result<(), SinkError> {
        (**self).write(bytes)
    }
    fn flush(&mut self) -> Result<(), SinkError> {
        (**self).flush()
    }
    fn finish(&mut self) -> Result<(), SinkError> {
        (**self).finish()
    }
    fn abort(&mut self, reason: &AbortReason) {
        (**self).abort(reason)
    }
    fn rows_processed(&mut self, rows: u64) {
        (**self).rows_processed(rows)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub enum SinkState {
    #[default]
    Open,
    Finished,
    Aborted(AbortReason),
}

/// Collects everything in memory.
#[derive(Debug, Default)]
pub struct VecSink {
    bytes: Vec<u8>,
    state: SinkState,
}

impl VecSink {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn bytes(&self) -> &[u8] {
        &self.bytes
    }

    pub fn into_bytes(self) -> Vec<u8> {
        self.bytes
    }

    pub fn state(&self) -> &SinkState {
        &self.state
    }
}

impl ChunkSink for VecSink {
    fn write(&mut self, bytes: &[u8]) -> Result<(), SinkError> {
        if self.state != SinkState::Open {
            return Err(SinkError::Ended);
        }
        self.bytes.extend_from_slice(bytes);
        Ok(())
    }

    fn finish(&mut self) -> Result<(), SinkError> {
        if self.state != SinkState::Open {
            return Err(SinkError::Ended);
        }
        self.state = SinkState::Finished;
        Ok(())
    }

    fn abort(&mut self, reason: &AbortReason) {
        if self.state == SinkState::Open {
            self.state = SinkState::Aborted(reason.clone());
        }
    }
}

/// Counts and drops bytes.
#[derive(Debug, Default)]
pub struct DiscardSink {
    pub total_bytes: u64,
    pub state: SinkState,
}

impl ChunkSink for DiscardSink {
    fn write(&mut self, bytes: &[u8]) -> Result<(), SinkError> {
        if self.state != SinkState::Open {
            return Err(SinkError::Ended);
        }
        self.total_bytes += bytes.len() as u64;
        Ok(())
    }

    fn finish(&mut self) -> Result<(), SinkError> {
        if self.state != SinkState::Open {
            return Err(SinkError::Ended);
        }
        self.state = SinkState::Finished;
        Ok(())
    }

    fn abort(&mut self, reason: &AbortReason) {
        if self.state == SinkState::Open {
            self.state = SinkState::Aborted(reason.clone());
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct WriteEvent {
    /// Rows fully processed when the write happened.
    pub row_index: u64,
    pub bytes: usize,
}

/// Returned by [`first_byte_row`] when nothing was ever written.
#[derive(Debug, Clone, Copy, PartialEq, Eq, thiserror::Error)]
#[error("no bytes reached the sink")]
pub struct NoOutput;

/// Wraps a sink and records exact write statistics.
#[derive(Debug)]
pub struct InstrumentedSink<S> {
    inner: S,
    current_row: u64,
    started: Instant,
    first_byte_at_row: Option<u64>,
    first_byte_after: Option<Duration>,
    total_bytes: u64,
    write_count: u64,
    peak_pending: usize,
    events: Option<Vec<WriteEvent>>,
}

impl<S: ChunkSink> InstrumentedSink<S> {
    pub fn new(inner: S) -> Self {
        Self {
            inner,
            current_row: 0,
            started: Instant::now(),
            first_byte_at_row: None,
            first_byte_after: None,
            total_bytes: 0,
            write_count: 0,
            peak_pending: 0,
            events: Some(Vec::new()),
        }
    }

    /// Skips the per-write event log (for very large runs).
    pub fn without_event_log(mut self) -> Self {
        self.events = None;
        self
    }

    /// Resets the wall-clock origin used for time to first byte.
    pub fn start_clock(&mut self) {
        self.started = Instant::now();
    }

    pub fn first_byte_at_row(&self) -> Option<u64> {
        self.first_byte_at_row
    }

    /// Wall-clock time from the clock origin to the first byte.
    pub fn first_byte_after(&self) -> Option<Duration> {
        self.first_byte_after
    }

    pub fn total_bytes(&self) -> u64 {
        self.total_bytes
    }

    pub fn write_count(&self) -> u64 {
        self.write_count
    }

    /// Largest single write accepted.
    pub fn peak_pending(&self) -> usize {
        self.peak_pending
    }

    pub fn write_events(&self) -> &[WriteEvent] {
        self.events.as_deref().unwrap_or(&[])
    }

    pub fn inner(&self) -> &S {
        &self.inner
    }

    pub fn into_inner(self) -> S {
        self.inner
    }
}

impl<S: ChunkSink> ChunkSink for InstrumentedSink<S> {
    fn write(&mut self, bytes: &[u8]) -> Result<(), SinkError> {
        self.inner.write(bytes)?;
        if !bytes.is_empty() && self.first_byte_at_row.is_none() {
            self.first_byte_at_row = Some(self.current_row);
            self.first_byte_after = Some(self.started.elapsed());
        }
        self.total_bytes += bytes.len() as u64;
        self.write_count += 1;
        self.peak_pending = self.peak_pending.max(bytes.len());
        if let Some(ev) = &mut self.events {
            ev.push(WriteEvent { row_index: self.current_row, bytes: bytes.len() });
        }
        Ok(())
    }

    fn flush(&mut self) -> Result<(), SinkError> {
        self.inner.flush()
    }

    fn finish(&mut self) -> Result<(), SinkError> {
        self.inner.finish()
    }

    fn abort(&mut self, reason: &AbortReason) {
        self.inner.abort(reason)
    }

    fn rows_processed(&mut self, rows: u64) {
        self.current_row = rows;
        self.inner.rows_processed(rows);
    }
}

/// Rows fully processed before the first byte reached the sink.
pub fn first_byte_row<S: ChunkSink>(sink: &InstrumentedSink<S>) -> Result<u64, NoOutput> {
    sink.first_byte_at_row.ok_or(NoOutput)
}
