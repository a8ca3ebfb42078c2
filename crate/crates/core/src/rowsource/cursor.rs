use std::fs::File;
use std::io::BufReader;
use std::ops::Deref;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Arc;

use super::file_format::{self, RowDecoder};
use super::store::{Rows, StoreError, TransactionStore};
use crate::domain::{ExportRequest, Timestamp, TransactionRecord};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CursorState {
    Open,
    Exhausted,
    Closed,
}

/// A row-source failure after iteration began.
#[derive(Debug, Clone, thiserror::Error)]
#[error("row source failed after {delivered} rows: {reason}")]
pub struct CursorError {
    pub delivered: u64,
    pub reason: String,
}

/// Tracks how many rows are alive in outstanding batches, and the peak.
#[derive(Debug, Default)]
pub struct RowGauge {
    live: AtomicUsize,
    peak: AtomicUsize,
}

impl RowGauge {
    fn acquire(&self, n: usize) {
        let now = self.live.fetch_add(n, Ordering::SeqCst) + n;
        self.peak.fetch_max(now, Ordering::SeqCst);
    }

    fn release(&self, n: usize) {
        self.live.fetch_sub(n, Ordering::SeqCst);
    }

    pub fn live(&self) -> usize {
        self.live.load(Ordering::SeqCst)
    }

    pub fn peak(&self) -> usize {
        self.peak.load(Ordering::SeqCst)
    }
}

/// Rows returned by one fetch. Dropping the batch releases its rows from the
/// cursor's [`RowGauge`].
#[derive(Debug)]
pub struct Batch {
    rows: Vec<TransactionRecord>,
    gauge: Option<Arc<RowGauge>>,
}

impl Batch {
    pub fn empty() -> Self {
        Self { rows: Vec::new(), gauge: None }
    }

    /// A batch that is not tracked by any gauge.
    pub fn detached(rows: Vec<TransactionRecord>) -> Self {
        Self { rows, gauge: None }
    }

    fn tracked(rows: Vec<TransactionRecord>, gauge: &Arc<RowGauge>) -> Self {
        gauge.acquire(rows.len());
        Self { rows, gauge: Some(Arc::clone(gauge)) }
    }

    pub fn truncate(&mut self, len: usize) {
        let dropped = self.rows.len().saturating_sub(len);
        self.rows.truncate(len);
        if let Some(g) = &self.gauge {
            g.release(dropped);
        }
    }
}

impl Deref for Batch {
    type Target = [TransactionRecord];
    fn deref(&self) -> &[TransactionRecord] {
        &self.rows
    }
}

impl Drop for Batch {
    fn drop(&mut self) {
        if let Some(g) = &self.gauge {
            g.release(self.rows.len());
        }
    }
}

/// Forward-only batch iteration, as consumed by the export engines.
pub trait RowSource: Send {
    /// Returns the next batch. An empty batch signals exhaustion; once
    /// exhausted or closed every further call returns an empty batch.
    fn fetch_batch(&mut self) -> Result<Batch, CursorError>;
    /// Releases the underlying handle. Idempotent.
    fn close(&mut self);
    fn state(&self) -> CursorState;
    /// Rows delivered so far.
    fn position(&self) -> u64;
}

impl<S: RowSource + ?Sized> RowSource for Box<S> {
    fn fetch_batch(&mut self) -> Result<Batch, CursorError> {
        (**self).fetch_batch()
    }
    fn close(&mut self) {
        (**self).close()
    }
    fn state(&self) -> CursorState {
        (**self).state()
    }
    fn position(&self) -> u64 {
        (**self).position()
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CursorQuery {
    pub account_id: String,
    pub date_from: Timestamp,
    pub date_to: Timestamp,
    pub max_rows: Option<u64>,
}

enum Reader {
    Memory { next: usize },
    File { decoder: RowDecoder<BufReader<File>>, remaining: u64, last_key: Option<(Timestamp, String)> },
}

/// Forward-only cursor over a [`TransactionStore`] filtered by account and
/// date range.
pub struct Cursor {
    store: TransactionStore,
    query: CursorQuery,
    fetch_size: usize,
    position: u64,
    state: CursorState,
    reader: Option<Reader>,
    gauge: Arc<RowGauge>,
    holds_handle: bool,
}

impl std::fmt::Debug for Cursor {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Cursor")
            .field("query", &self.query)
            .field("fetch_size", &self.fetch_size)
            .field("position", &self.position)
            .field("state", &self.state)
            .finish()
    }
}

/// Opens a cursor positioned before the first matching row. No rows are
/// materialized until the first fetch.
pub fn open_cursor(store: &TransactionStore, req: &ExportRequest) -> Result<Cursor, StoreError> {
    Cursor::open(
        store,
        CursorQuery {
            account_id: req.account_id.clone(),
            date_from: req.date_from,
            date_to: req.date_to,
            max_rows: req.max_rows,
        },
        req.fetch_size as usize,
    )
}

impl Cursor {
    pub fn open(store: &TransactionStore, query: CursorQuery, fetch_size: usize) -> Result<Self, StoreError> {
        assert!(fetch_size > 0, "fetch_size must be positive");
        let reader = match &store.inner.rows {
            Rows::Memory(rows) => {
                let next = rows.partition_point(|r| r.posted_at() < query.date_from);
                Reader::Memory { next }
            }
            Rows::File(path) => {
                let fe = |e: std::io::Error| StoreError::File { path: path.clone(), source: e.into() };
                let mut reader = BufReader::with_capacity(1 << 16, File::open(path).map_err(fe)?);
                let remaining = file_format::read_header(&mut reader)
                    .map_err(|source| StoreError::File { path: path.clone(), source })?;
                Reader::File { decoder: RowDecoder::new(reader), remaining, last_key: None }
            }
        };
        store.inner.open_handles.fetch_add(1, Ordering::SeqCst);
        Ok(Self {
            store: store.clone(),
            query,
            fetch_size,
            position: 0,
            state: CursorState::Open,
            reader: Some(reader),
            gauge: Arc::new(RowGauge::default()),
            holds_handle: true,
        })
    }

    pub fn fetch_size(&self) -> usize {
        self.fetch_size
    }

    pub fn query(&self) -> &CursorQuery {
        &self.query
    }

    /// Shared view of the materialized-row counter; stays valid after the
    /// cursor is moved into an engine.
    pub fn gauge(&self) -> Arc<RowGauge> {
        Arc::clone(&self.gauge)
    }

    fn matches(&self, r: &TransactionRecord) -> bool {
        r.account_id() == self.query.account_id && r.posted_at() >= self.query.date_from
    }

    fn fill(&mut self, want: usize, out: &mut Vec<TransactionRecord>) -> Result<(), String> {
        let date_to = self.query.date_to;
        let reader = self.reader.take().expect("open cursor has a reader");
        let mut reader = reader;
        let result = (|| {
            match &mut reader {
                Reader::Memory { next } => {
                    let Rows::Memory(rows) = &self.store.inner.rows else { unreachable!() };
                    while out.len() < want {
                        let Some(r) = rows.get(*next) else { break };
                        if r.posted_at() > date_to {
                            *next = rows.len();
                            break;
                        }
                        *next += 1;
                        if self.matches(r) {
                            out.push(r.clone());
                        }
                    }
                }
                Reader::File { decoder, remaining, last_key } => {
                    while out.len() < want && *remaining > 0 {
                        let offset = decoder.offset();
                        let r = decoder.next_row().map_err(|e| e.to_string())?;
                        *remaining -= 1;
                        let key = (r.posted_at(), r.txn_id().to_owned());
                        if last_key.as_ref().is_some_and(|k| *k >= key) {
                            return Err(format!("rows out of store order at byte offset {offset}"));
                        }
                        *last_key = Some(key);
                        if r.posted_at() > date_to {
                            *remaining = 0;
                            break;
                        }
                        if self.matches(&r) {
                            out.push(r);
                        }
                    }
                }
            }
            Ok(())
        })();
        self.reader = Some(reader);
        result
    }

    /// Next `<= fetch_size` rows in store order.
    pub fn fetch_batch(&mut self) -> Result<Batch, CursorError> {
        if self.state != CursorState::Open {
            return Ok(Batch::empty());
        }
        let cap_left = self.query.max_rows.map_or(u64::MAX, |m| m.saturating_sub(self.position));
        let want = (self.fetch_size as u64).min(cap_left) as usize;
        let mut rows = Vec::with_capacity(want);
        if want > 0 {
            if let Err(reason) = self.fill(want, &mut rows) {
                let delivered = self.position;
                self.close();
                return Err(CursorError { delivered, reason });
            }
        }
        if rows.is_empty() {
            self.state = CursorState::Exhausted;
            self.reader = None;
            return Ok(Batch::empty());
        }
        self.position += rows.len() as u64;
        Ok(Batch::tracked(rows, &self.gauge))
    }

    /// Marks the cursor closed and releases its store handle. Idempotent.
    pub fn close(&mut self) {
        self.state = CursorState::Closed;
        self.reader = None;
        if std::mem::take(&mut self.holds_handle) {
            self.store.inner.open_handles.fetch_sub(1, Ordering::SeqCst);
        }
    }

    pub fn state(&self) -> CursorState {
        self.state
    }

    pub fn position(&self) -> u64 {
        self.position
    }
}

pub fn close_cursor(cursor: &mut Cursor) {
    cursor.close();
}

impl Drop for Cursor {
    fn drop(&mut self) {
        self.close();
    }
}

impl RowSource for Cursor {
    fn fetch_batch(&mut self) -> Result<Batch, CursorError> {
        Cursor::fetch_batch(self)
    }
    fn close(&mut self) {
        Cursor::close(self)
    }
    fn state(&self) -> CursorState {
        self.state
    }
    fn position(&self) -> u64 {
        self.position
    }
}
