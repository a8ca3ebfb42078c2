use std::collections::HashSet;
use std::fs::{self, File};
use std::io::{BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Arc;

use sha2::{Digest, Sha256};

use super::file_format::{self, FormatError, RowDecoder};
use crate::domain::TransactionRecord;

#[derive(Debug, thiserror::Error)]
pub enum StoreError {
    #[error("store file {path}: {source}")]
    File { path: PathBuf, source: FormatError },
    #[error("duplicate txn_id {txn_id:?} in account {account_id:?}")]
    DuplicateTxnId { account_id: String, txn_id: String },
    #[error("store rows out of order at row {0}")]
    OutOfOrder(u64),
}

impl StoreError {
    fn file(path: &Path, source: impl Into<FormatError>) -> Self {
        StoreError::File { path: path.to_owned(), source: source.into() }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Backing {
    Memory,
    File,
}

#[derive(Debug)]
pub(crate) enum Rows {
    Memory(Vec<TransactionRecord>),
    File(PathBuf),
}

#[derive(Debug)]
pub(crate) struct StoreInner {
    pub(crate) rows: Rows,
    pub(crate) row_count: u64,
    pub(crate) open_handles: AtomicUsize,
}

/// An immutable, ordered transaction table. Rows are sorted by
/// `(posted_at, txn_id)`. Cloning is cheap and clones share the open-handle
/// counter.
#[derive(Debug, Clone)]
pub struct TransactionStore {
    pub(crate) inner: Arc<StoreInner>,
}

impl TransactionStore {
    /// Builds an in-memory store, sorting rows into store order.
    pub fn from_rows(mut rows: Vec<TransactionRecord>) -> Result<Self, StoreError> {
        let mut seen = HashSet::with_capacity(rows.len());
        for r in &rows {
            if !seen.insert((r.account_id(), r.txn_id())) {
                return Err(StoreError::DuplicateTxnId {
                    account_id: r.account_id().to_owned(),
                    txn_id: r.txn_id().to_owned(),
                });
            }
        }
        drop(seen);
        rows.sort_by(|a, b| a.sort_key().cmp(&b.sort_key()));
        let row_count = rows.len() as u64;
        Ok(Self::with_rows(Rows::Memory(rows), row_count))
    }

    /// Opens a file-backed store. Only the header is read here; rows are
    /// streamed by cursors.
    pub fn open_file(path: impl AsRef<Path>) -> Result<Self, StoreError> {
        let path = path.as_ref();
        let row_count = read_file_header(path)?;
        Ok(Self::with_rows(Rows::File(path.to_owned()), row_count))
    }

    fn with_rows(rows: Rows, row_count: u64) -> Self {
        Self { inner: Arc::new(StoreInner { rows, row_count, open_handles: AtomicUsize::new(0) }) }
    }

    pub fn row_count(&self) -> u64 {
        self.inner.row_count
    }

    pub fn backing(&self) -> Backing {
        match self.inner.rows {
            Rows::Memory(_) => Backing::Memory,
            Rows::File(_) => Backing::File,
        }
    }

    /// Number of cursors currently holding this store open.
    pub fn open_handles(&self) -> usize {
        self.inner.open_handles.load(Ordering::SeqCst)
    }

    /// All rows in store order. Reads the whole file for file-backed stores.
    pub fn scan(&self) -> Result<Vec<TransactionRecord>, StoreError> {
        match &self.inner.rows {
            Rows::Memory(rows) => Ok(rows.clone()),
            Rows::File(path) => {
                let mut rows = Vec::with_capacity(self.inner.row_count as usize);
                self.for_each_file_row(path, |r| rows.push(r))?;
                Ok(rows)
            }
        }
    }

    fn for_each_file_row(&self, path: &Path, mut f: impl FnMut(TransactionRecord)) -> Result<(), StoreError> {
        let mut reader = BufReader::new(File::open(path).map_err(|e| StoreError::file(path, e))?);
        let count = file_format::read_header(&mut reader).map_err(|e| StoreError::file(path, e))?;
        let mut dec = RowDecoder::new(reader);
        for _ in 0..count {
            f(dec.next_row().map_err(|e| StoreError::file(path, e))?);
        }
        Ok(())
    }

    /// SHA-256 over the encoded rows in store order, hex encoded. Independent
    /// of backing.
    pub fn digest(&self) -> Result<String, StoreError> {
        let mut hasher = Sha256::new();
        let mut buf = Vec::with_capacity(512);
        let mut feed = |r: &TransactionRecord| {
            buf.clear();
            file_format::encode_row(r, &mut buf);
            hasher.update(&buf);
        };
        match &self.inner.rows {
            Rows::Memory(rows) => rows.iter().for_each(&mut feed),
            Rows::File(path) => self.for_each_file_row(path, |r| feed(&r))?,
        }
        Ok(hex::encode(hasher.finalize()))
    }

    /// Writes the store in the binary row-log format. The file is written to a
    /// sibling temp path and renamed into place.
    pub fn write_file(&self, path: impl AsRef<Path>) -> Result<(), StoreError> {
        let path = path.as_ref();
        let tmp = path.with_extension("tmp");
        let result = (|| -> Result<(), std::io::Error> {
            let mut w = BufWriter::with_capacity(1 << 16, File::create(&tmp)?);
            file_format::write_header(&mut w, self.row_count())?;
            let mut buf = Vec::with_capacity(512);
            let mut put = |r: &TransactionRecord| -> std::io::Result<()> {
                buf.clear();
                file_format::encode_row(r, &mut buf);
                w.write_all(&buf)
            };
            match &self.inner.rows {
                Rows::Memory(rows) => rows.iter().try_for_each(&mut put)?,
                Rows::File(_) => {
                    for r in self.scan().map_err(std::io::Error::other)? {
                        put(&r)?;
                    }
                }
            }
            w.into_inner().map_err(|e| e.into_error())?.sync_all()?;
            fs::rename(&tmp, path)
        })();
        result.map_err(|e| {
            let _ = fs::remove_file(&tmp);
            StoreError::file(path, e)
        })
    }
}

pub(crate) fn read_file_header(path: &Path) -> Result<u64, StoreError> {
    let mut f = File::open(path).map_err(|e| StoreError::file(path, e))?;
    file_format::read_header(&mut f).map_err(|e| StoreError::file(path, e))
}
