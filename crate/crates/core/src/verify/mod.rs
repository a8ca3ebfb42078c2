//! Client-side structural checks for exported files.
//!
//! The parsers here work on raw bytes and share nothing with the serializers:
//! amounts, timestamps and escapes are decoded by code in this module only.
//! A file is COMPLETE only when its trailer is present and its declared count
//! and balance match what was parsed; a clean prefix without the trailer is
//! TRUNCATED; anything else is MALFORMED.

mod csv;
mod ofx;
mod sweep;

use serde::Serialize;

pub use self::csv::{verify_csv, verify_csv_with};
pub use self::ofx::{verify_ofx, verify_ofx_with};
pub use self::sweep::{record_boundaries, truncation_sweep, SWEEP_RANDOM_OFFSETS};
use crate::domain::{ExportFormat, Money};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "UPPERCASE")]
pub enum VerifyStatus {
    Complete,
    Truncated,
    Malformed,
}

impl std::fmt::Display for VerifyStatus {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            VerifyStatus::Complete => "COMPLETE",
            VerifyStatus::Truncated => "TRUNCATED",
            VerifyStatus::Malformed => "MALFORMED",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct VerifyResult {
    pub status: VerifyStatus,
    /// Records fully parsed.
    pub record_count: u64,
    pub declared_count: Option<u64>,
    pub declared_balance: Option<Money>,
    pub computed_balance: Money,
    pub first_error_offset: Option<u64>,
    /// `INTU.BID` value, for OFX-family files that carry one.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub institution_id: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub detail: Option<String>,
}

impl VerifyResult {
    pub fn is_complete(&self) -> bool {
        self.status == VerifyStatus::Complete
    }
}

/// One transaction recovered from an export, in decoded form.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct VerifiedRecord {
    pub txn_id: String,
    pub posted_at: i64,
    pub account_id: String,
    pub txn_type: String,
    pub amount_minor: i64,
    pub currency: String,
    pub description: String,
}

/// Dispatches on format. QFX and QBO use the OFX parser.
pub fn verify(data: &[u8], format: ExportFormat) -> VerifyResult {
    match format {
        ExportFormat::Csv => verify_csv(data),
        _ => verify_ofx(data),
    }
}

/// Like [`verify`] but also returns the recovered records.
pub fn parse_records(data: &[u8], format: ExportFormat) -> (VerifyResult, Vec<VerifiedRecord>) {
    let mut records = Vec::new();
    let result = match format {
        ExportFormat::Csv => verify_csv_with(data, |r, _| records.push(r)),
        _ => verify_ofx_with(data, |r, _| records.push(r)),
    };
    (result, records)
}

/// Running state shared by both parsers.
#[derive(Debug, Default)]
struct Tally {
    count: u64,
    balance: i128,
}

impl Tally {
    fn add(&mut self, minor: i64) {
        self.count += 1;
        self.balance += minor as i128;
    }

    fn finish(
        &self,
        status: VerifyStatus,
        declared_count: Option<u64>,
        declared_balance: Option<i64>,
        first_error_offset: Option<u64>,
        detail: Option<String>,
    ) -> VerifyResult {
        let (status, computed, detail) = match i64::try_from(self.balance) {
            Ok(b) => (status, b, detail),
            Err(_) => (VerifyStatus::Malformed, 0, Some("balance overflow".into())),
        };
        VerifyResult {
            status,
            record_count: self.count,
            declared_count,
            declared_balance: declared_balance.map(Money::from_minor),
            computed_balance: Money::from_minor(computed),
            first_error_offset,
            institution_id: None,
            detail,
        }
    }
}

/// Strict decimal with exactly two fraction digits, no leading zeros, no `-0.00`.
fn parse_decimal(s: &[u8]) -> Option<i64> {
    let (neg, body) = match s.split_first() {
        Some((b'-', rest)) => (true, rest),
        _ => (false, s),
    };
    let dot = body.iter().position(|&b| b == b'.')?;
    let (int, frac) = (&body[..dot], &body[dot + 1..]);
    if int.is_empty() || frac.len() != 2 || (int.len() > 1 && int[0] == b'0') {
        return None;
    }
    let mut v: i128 = 0;
    for &b in int.iter().chain(frac) {
        if !b.is_ascii_digit() {
            return None;
        }
        v = v * 10 + (b - b'0') as i128;
        if v > i64::MAX as i128 + 1 {
            return None;
        }
    }
    if neg && v == 0 {
        return None;
    }
    i64::try_from(if neg { -v } else { v }).ok()
}

fn digits(s: &[u8]) -> Option<i64> {
    if s.is_empty() || !s.iter().all(u8::is_ascii_digit) {
        return None;
    }
    Some(s.iter().fold(0i64, |acc, &b| acc * 10 + (b - b'0') as i64))
}

// Days since 1970-01-01 for a proleptic Gregorian date.
fn days_from_civil(y: i64, m: i64, d: i64) -> i64 {
    let y = if m <= 2 { y - 1 } else { y };
    let era = if y >= 0 { y } else { y - 399 } / 400;
    let yoe = y - era * 400;
    let mp = (m + 9) % 12;
    let doy = (153 * mp + 2) / 5 + d - 1;
    let doe = yoe * 365 + yoe / 4 - yoe / 100 + doy;
    era * 146_097 + doe - 719_468
}

fn epoch_from_parts(y: i64, mo: i64, d: i64, h: i64, mi: i64, s: i64) -> Option<i64> {
    let leap = (y % 4 == 0 && y % 100 != 0) || y % 400 == 0;
    let month_len = [31, if leap { 29 } else { 28 }, 31, 30, 31, 30, 31, 31, 30, 31, 30, 31];
    if !(1..=12).contains(&mo) || d < 1 || d > month_len[(mo - 1) as usize] || h > 23 || mi > 59 || s > 59 {
        return None;
    }
    Some(days_from_civil(y, mo, d) * 86_400 + h * 3600 + mi * 60 + s)
}

/// `YYYY-MM-DDThh:mm:ssZ`
fn parse_iso_utc(s: &[u8]) -> Option<i64> {
    if s.len() != 20 || s[4] != b'-' || s[7] != b'-' || s[10] != b'T' || s[13] != b':' || s[16] != b':' || s[19] != b'Z'
    {
        return None;
    }
    epoch_from_parts(
        digits(&s[0..4])?,
        digits(&s[5..7])?,
        digits(&s[8..10])?,
        digits(&s[11..13])?,
        digits(&s[14..16])?,
        digits(&s[17..19])?,
    )
}

/// `YYYYMMDDHHMMSS`
fn parse_ofx_datetime(s: &[u8]) -> Option<i64> {
    if s.len() != 14 {
        return None;
    }
    epoch_from_parts(
        digits(&s[0..4])?,
        digits(&s[4..6])?,
        digits(&s[6..8])?,
        digits(&s[8..10])?,
        digits(&s[10..12])?,
        digits(&s[12..14])?,
    )
}

fn valid_txn_id(s: &str) -> bool {
    (1..=64).contains(&s.len()) && s.bytes().all(|b| b.is_ascii_alphanumeric() || b == b'-')
}

fn type_matches_sign(txn_type: &str, minor: i64) -> bool {
    match txn_type {
        "DEBIT" => minor < 0,
        "CREDIT" => minor >= 0,
        _ => false,
    }
}
