//! Fault and gating wrappers placed at the row-source and sink boundaries.

use std::sync::atomic::{AtomicBool, Ordering};
use std::sync::{Arc, Condvar, Mutex};
use std::time::Duration;

use super::sink::{AbortReason, ChunkSink, SinkError};
use crate::rowsource::{Batch, CursorError, CursorState, RowSource};

/// Faults to inject into one run. If both are set, whichever triggers first
/// fires and the other is disarmed.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct FaultPlan {
    /// The row source fails once this many rows have been delivered.
    pub fail_after_rows: Option<u64>,
    /// The sink fails once this many bytes have been accepted.
    pub fail_sink_after_bytes: Option<u64>,
}

impl FaultPlan {
    pub fn none() -> Self {
        Self::default()
    }

    pub fn source_after(rows: u64) -> Self {
        Self { fail_after_rows: Some(rows), ..Self::default() }
    }

    pub fn sink_after(bytes: u64) -> Self {
        Self { fail_sink_after_bytes: Some(bytes), ..Self::default() }
    }

    /// Builds wrappers sharing one latch.
    pub fn arm(&self) -> ArmedFaults {
        ArmedFaults { plan: *self, fired: Arc::new(AtomicBool::new(false)) }
    }
}

#[derive(Debug, Clone)]
pub struct ArmedFaults {
    plan: FaultPlan,
    fired: Arc<AtomicBool>,
}

impl ArmedFaults {
    pub fn source<S: RowSource>(&self, inner: S) -> FaultyRowSource<S> {
        FaultyRowSource { inner, fail_after: self.plan.fail_after_rows, delivered: 0, fired: Arc::clone(&self.fired) }
    }

    pub fn sink<K: ChunkSink>(&self, inner: K) -> FaultySink<K> {
        FaultySink { inner, limit: self.plan.fail_sink_after_bytes, accepted: 0, fired: Arc::clone(&self.fired) }
    }

    pub fn fired(&self) -> bool {
        self.fired.load(Ordering::SeqCst)
    }
}

fn try_fire(latch: &AtomicBool) -> bool {
    latch.compare_exchange(false, true, Ordering::SeqCst, Ordering::SeqCst).is_ok()
}

pub struct FaultyRowSource<S> {
    inner: S,
    fail_after: Option<u64>,
    delivered: u64,
    fired: Arc<AtomicBool>,
}

impl<S: RowSource> RowSource for FaultyRowSource<S> {
    fn fetch_batch(&mut self) -> Result<Batch, CursorError> {
        if let Some(limit) = self.fail_after {
            if self.delivered >= limit && try_fire(&self.fired) {
                self.fail_after = None;
                return Err(CursorError { delivered: self.delivered, reason: "injected row source fault".into() });
            }
        }
        let mut batch = self.inner.fetch_batch()?;
        if let Some(limit) = self.fail_after {
            let room = limit.saturating_sub(self.delivered) as usize;
            if batch.len() > room && !self.fired.load(Ordering::SeqCst) {
                batch.truncate(room);
                if batch.is_empty() && try_fire(&self.fired) {
                    self.fail_after = None;
                    return Err(CursorError { delivered: self.delivered, reason: "injected row source fault".into() });
                }
            }
        }
        self.delivered += batch.len() as u64;
        Ok(batch)
    }

    fn close(&mut self) {
        self.inner.close()
    }

    fn state(&self) -> CursorState {
        self.inner.state()
    }

    fn position(&self) -> u64 {
        self.delivered
    }
}

/// Passes bytes through until the limit, then behaves like a disconnected
/// client.
pub struct FaultySink<K> {
    inner: K,
    limit: Option<u64>,
    accepted: u64,
    fired: Arc<AtomicBool>,
}

impl<K> FaultySink<K> {
    pub fn inner(&self) -> &K {
        &self.inner
    }

    pub fn into_inner(self) -> K {
        self.inner
    }
}

impl<K: ChunkSink> ChunkSink for FaultySink<K> {
    fn write(&mut self, bytes: &[u8]) -> Result<(), SinkError> {
        if let Some(limit) = self.limit {
            let room = limit.saturating_sub(self.accepted);
            if bytes.len() as u64 > room && !self.fired.load(Ordering::SeqCst) && try_fire(&self.fired) {
                self.inner.write(&bytes[..room as usize])?;
                self.accepted += room;
                self.limit = None;
                return Err(SinkError::Closed);
            }
        }
        self.inner.write(bytes)?;
        self.accepted += bytes.len() as u64;
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
        self.inner.rows_processed(rows)
    }
}

/// One-shot latch that blocked threads can wait on.
#[derive(Debug, Clone, Default)]
pub struct Gate {
    inner: Arc<(Mutex<bool>, Condvar)>,
}

impl Gate {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn open(&self) {
        let (lock, cv) = &*self.inner;
        *lock.lock().unwrap() = true;
        cv.notify_all();
    }

    pub fn is_open(&self) -> bool {
        *self.inner.0.lock().unwrap()
    }

    /// Waits until opened; returns `false` on timeout.
    pub fn wait(&self, timeout: Duration) -> bool {
        let (lock, cv) = &*self.inner;
        let guard = lock.lock().unwrap();
        let (guard, _) = cv.wait_timeout_while(guard, timeout, |open| !*open).unwrap();
        *guard
    }
}

/// Blocks fetch number `gated_fetch` (1-based) until the gate opens. A gate
/// that never opens fails the fetch after `timeout`.
pub struct GatedRowSource<S> {
    inner: S,
    gate: Gate,
    gated_fetch: usize,
    fetches: usize,
    timeout: Duration,
}

impl<S> GatedRowSource<S> {
    pub fn new(inner: S, gate: Gate, gated_fetch: usize, timeout: Duration) -> Self {
        Self { inner, gate, gated_fetch, fetches: 0, timeout }
    }
}

impl<S: RowSource> RowSource for GatedRowSource<S> {
    fn fetch_batch(&mut self) -> Result<Batch, CursorError> {
        self.fetches += 1;
        if self.fetches == self.gated_fetch && !self.gate.wait(self.timeout) {
            return Err(CursorError { delivered: self.inner.position(), reason: "gate timed out".into() });
        }
        self.inner.fetch_batch()
    }

    fn close(&mut self) {
        self.inner.close()
    }

    fn state(&self) -> CursorState {
        self.inner.state()
    }

    fn position(&self) -> u64 {
        self.inner.position()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::pipeline::VecSink;

    #[test]
    fn sink_fault_passes_prefix() {
        let armed = FaultPlan::sink_after(5).arm();
        let mut s = armed.sink(VecSink::new());
        s.write(b"abc").unwrap();
        assert_eq!(s.write(b"defg"), Err(SinkError::Closed));
        assert!(armed.fired());
        assert_eq!(s.inner().bytes(), b"abcde");
    }

    #[test]
    fn gate_times_out_and_opens() {
        let g = Gate::new();
        assert!(!g.wait(Duration::from_millis(10)));
        let g2 = g.clone();
        let t = std::thread::spawn(move || g2.wait(Duration::from_secs(10)));
        g.open();
        assert!(t.join().unwrap());
    }
}
