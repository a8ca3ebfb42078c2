//! Binary row log used by file-backed stores.
//!
//! Layout, all integers little-endian:
//!
//! ```text
//! header: "TXS1" | u16 version (= 1) | u64 row count
//! row:    u32 record length (bytes that follow)
//!         u16 len + txn_id | u16 len + account_id | i64 posted_at
//!         i64 amount minor units | u8 txn_type (0 = DEBIT, 1 = CREDIT)
//!         u16 len + description
//! ```

use std::io::{self, Read, Write};

use crate::domain::{Money, Timestamp, TransactionRecord, TxnType};

pub const MAGIC: &[u8; 4] = b"TXS1";
pub const VERSION: u16 = 1;
pub const HEADER_LEN: usize = 4 + 2 + 8;

/// Upper bound on an encoded row given the field length caps.
const MAX_ROW_LEN: u32 = 2 + 64 + 2 + 64 + 8 + 8 + 1 + 2 + 255;

#[derive(Debug, thiserror::Error)]
pub enum FormatError {
    #[error("i/o error: {0}")]
    Io(#[from] io::Error),
    #[error("bad magic bytes {0:?}")]
    BadMagic([u8; 4]),
    #[error("unsupported store version {0}")]
    UnsupportedVersion(u16),
    #[error("corrupt row at byte offset {offset}: {reason}")]
    Corrupt { offset: u64, reason: String },
    #[error("unexpected end of file at byte offset {0}")]
    UnexpectedEof(u64),
}

pub fn write_header<W: Write>(w: &mut W, row_count: u64) -> io::Result<()> {
    w.write_all(MAGIC)?;
    w.write_all(&VERSION.to_le_bytes())?;
    w.write_all(&row_count.to_le_bytes())
}

/// Reads and checks the header, returning the declared row count.
pub fn read_header<R: Read>(r: &mut R) -> Result<u64, FormatError> {
    let mut buf = [0u8; HEADER_LEN];
    r.read_exact(&mut buf).map_err(|e| match e.kind() {
        io::ErrorKind::UnexpectedEof => FormatError::UnexpectedEof(0),
        _ => FormatError::Io(e),
    })?;
    let magic: [u8; 4] = buf[0..4].try_into().unwrap();
    if &magic != MAGIC {
        return Err(FormatError::BadMagic(magic));
    }
    let version = u16::from_le_bytes(buf[4..6].try_into().unwrap());
    if version != VERSION {
        return Err(FormatError::UnsupportedVersion(version));
    }
    Ok(u64::from_le_bytes(buf[6..14].try_into().unwrap()))
}

fn put_str(out: &mut Vec<u8>, s: &str) {
    out.extend_from_slice(&(s.len() as u16).to_le_bytes());
    out.extend_from_slice(s.as_bytes());
}

/// Appends one length-prefixed row to `out`.
pub fn encode_row(row: &TransactionRecord, out: &mut Vec<u8>) {
    let start = out.len();
    out.extend_from_slice(&[0u8; 4]);
    put_str(out, row.txn_id());
    put_str(out, row.account_id());
    out.extend_from_slice(&row.posted_at().epoch_seconds().to_le_bytes());
    out.extend_from_slice(&row.amount().minor_units().to_le_bytes());
    out.push(row.txn_type().code());
    put_str(out, row.description());
    let len = (out.len() - start - 4) as u32;
    out[start..start + 4].copy_from_slice(&len.to_le_bytes());
}

struct Fields<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Fields<'a> {
    fn take(&mut self, n: usize) -> Option<&'a [u8]> {
        let end = self.pos.checked_add(n)?;
        let s = self.buf.get(self.pos..end)?;
        self.pos = end;
        Some(s)
    }
    fn u16(&mut self) -> Option<u16> {
        self.take(2).map(|b| u16::from_le_bytes(b.try_into().unwrap()))
    }
    fn i64(&mut self) -> Option<i64> {
        self.take(8).map(|b| i64::from_le_bytes(b.try_into().unwrap()))
    }
    fn string(&mut self) -> Option<&'a str> {
        let n = self.u16()? as usize;
        std::str::from_utf8(self.take(n)?).ok()
    }
}

/// Decodes a row body (without its length prefix).
pub fn decode_row_body(body: &[u8], offset: u64) -> Result<TransactionRecord, FormatError> {
    let corrupt = |reason: String| FormatError::Corrupt { offset, reason };
    let mut f = Fields { buf: body, pos: 0 };
    let short = || corrupt("row body too short or invalid UTF-8".into());
    let txn_id = f.string().ok_or_else(short)?;
    let account_id = f.string().ok_or_else(short)?;
    let posted = f.i64().ok_or_else(short)?;
    let amount = f.i64().ok_or_else(short)?;
    let code = f.take(1).ok_or_else(short)?[0];
    let description = f.string().ok_or_else(short)?;
    if f.pos != body.len() {
        return Err(corrupt(format!("{} trailing bytes in row", body.len() - f.pos)));
    }
    let txn_type = TxnType::from_code(code).ok_or_else(|| corrupt(format!("bad txn_type code {code}")))?;
    let posted_at = Timestamp::from_epoch(posted).map_err(|e| corrupt(e.to_string()))?;
    TransactionRecord::with_declared_type(
        txn_id,
        account_id,
        posted_at,
        Money::from_minor(amount),
        txn_type,
        description,
    )
    .map_err(|e| corrupt(e.to_string()))
}

/// Sequential row decoder over any reader positioned just after the header.
pub struct RowDecoder<R> {
    reader: R,
    offset: u64,
    body: Vec<u8>,
}

impl<R: Read> RowDecoder<R> {
    pub fn new(reader: R) -> Self {
        Self { reader, offset: HEADER_LEN as u64, body: Vec::with_capacity(MAX_ROW_LEN as usize) }
    }

    pub fn offset(&self) -> u64 {
        self.offset
    }

    pub fn next_row(&mut self) -> Result<TransactionRecord, FormatError> {
        let eof = |offset| {
            move |e: io::Error| match e.kind() {
                io::ErrorKind::UnexpectedEof => FormatError::UnexpectedEof(offset),
                _ => FormatError::Io(e),
            }
        };
        let mut len = [0u8; 4];
        self.reader.read_exact(&mut len).map_err(eof(self.offset))?;
        let len = u32::from_le_bytes(len);
        if len > MAX_ROW_LEN {
            return Err(FormatError::Corrupt {
                offset: self.offset,
                reason: format!("row length {len} exceeds limit"),
            });
        }
        self.body.resize(len as usize, 0);
        self.reader.read_exact(&mut self.body).map_err(eof(self.offset + 4))?;
        let row = decode_row_body(&self.body, self.offset)?;
        self.offset += 4 + len as u64;
        Ok(row)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample() -> TransactionRecord {
        TransactionRecord::new(
            "T-1",
            "ACC",
            Timestamp::from_epoch(1_700_000_000).unwrap(),
            Money::from_minor(-1250),
            "Coffee, \"large\"",
        )
        .unwrap()
    }

    #[test]
    fn header_layout_is_pinned() {
        let mut buf = Vec::new();
        write_header(&mut buf, 3).unwrap();
        assert_eq!(buf, b"TXS1\x01\x00\x03\x00\x00\x00\x00\x00\x00\x00");
        assert_eq!(read_header(&mut buf.as_slice()).unwrap(), 3);
    }

    #[test]
    fn row_layout_is_pinned() {
        let mut buf = Vec::new();
        encode_row(&sample(), &mut buf);
        let mut expected = Vec::new();
        expected.extend_from_slice(&(2 + 3 + 2 + 3 + 8 + 8 + 1 + 2 + 15u32).to_le_bytes());
        expected.extend_from_slice(b"\x03\x00T-1\x03\x00ACC");
        expected.extend_from_slice(&1_700_000_000i64.to_le_bytes());
        expected.extend_from_slice(&(-1250i64).to_le_bytes());
        expected.push(0);
        expected.extend_from_slice(b"\x0f\x00Coffee, \"large\"");
        assert_eq!(buf, expected);
        let mut dec = RowDecoder::new(buf.as_slice());
        assert_eq!(dec.next_row().unwrap(), sample());
    }

    #[test]
    fn rejects_bad_input() {
        assert!(matches!(read_header(&mut &b"TXS2\x01\x00\0\0\0\0\0\0\0\0"[..]), Err(FormatError::BadMagic(_))));
        assert!(matches!(
            read_header(&mut &b"TXS1\x02\x00\0\0\0\0\0\0\0\0"[..]),
            Err(FormatError::UnsupportedVersion(2))
        ));
        assert!(matches!(read_header(&mut &b"TXS1"[..]), Err(FormatError::UnexpectedEof(_))));

        let mut buf = Vec::new();
        encode_row(&sample(), &mut buf);
        let flipped_type = buf.len() - 15 - 2 - 1;
        buf[flipped_type] = 1;
        let err = RowDecoder::new(buf.as_slice()).next_row().unwrap_err();
        assert!(matches!(err, FormatError::Corrupt { .. }), "{err}");

        let mut buf = Vec::new();
        encode_row(&sample(), &mut buf);
        buf.truncate(buf.len() - 3);
        assert!(matches!(RowDecoder::new(buf.as_slice()).next_row(), Err(FormatError::UnexpectedEof(_))));
    }
}
