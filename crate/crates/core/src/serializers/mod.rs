//! Per-format serializers behind one three-phase contract: header once,
//! records zero or more times, trailer once.
//!
//! Field rendering and escaping happen inside each serializer and the bytes
//! are appended to a caller-owned buffer, so a serializer never holds more
//! than one record of output.

mod csv;
mod ofx;

use serde::Serialize;
use sha2::{Digest, Sha256};

pub use self::csv::{push_field as push_csv_field, CsvSerializer, CSV_HEADER};
pub use self::ofx::{escape_text as escape_ofx_text, OfxSerializer, OfxVariant};
use crate::domain::{ExportFormat, ExportRecord, ExportRequest, Money, Timestamp, UnknownFormat, CURRENCY};

/// Institution identifier written into QFX/QBO branding and `BANKID`.
pub const DEFAULT_INSTITUTION_ID: &str = "2430";

/// Document-level values for headers. Nothing in here comes from a clock, so
/// output is reproducible.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct ExportContext {
    pub account_id: String,
    pub date_from: Timestamp,
    pub date_to: Timestamp,
    pub currency: &'static str,
    pub file_uid: String,
    pub institution_id: String,
    pub generated_at: Timestamp,
}

impl ExportContext {
    /// Context derived only from the request parameters that select rows.
    ///
    /// `file_uid` is a digest of account, range and row cap (not format, so
    /// OFX variants of one export share it) and `generated_at` is the end of
    /// the requested range.
    pub fn for_request(req: &ExportRequest) -> Self {
        let mut h = Sha256::new();
        h.update(req.account_id.as_bytes());
        h.update(req.date_from.epoch_seconds().to_le_bytes());
        h.update(req.date_to.epoch_seconds().to_le_bytes());
        h.update(req.max_rows.unwrap_or(0).to_le_bytes());
        let digest = h.finalize();
        Self {
            account_id: req.account_id.clone(),
            date_from: req.date_from,
            date_to: req.date_to,
            currency: CURRENCY,
            file_uid: hex::encode_upper(&digest[..12]),
            institution_id: DEFAULT_INSTITUTION_ID.to_owned(),
            generated_at: req.date_to,
        }
    }

    #[cfg(test)]
    pub(crate) fn fixed_for_tests() -> Self {
        Self {
            account_id: "A1".into(),
            date_from: Timestamp::from_epoch(1_704_067_200).unwrap(),
            date_to: Timestamp::from_epoch(1_735_689_599).unwrap(),
            currency: CURRENCY,
            file_uid: "TESTUID0001".into(),
            institution_id: DEFAULT_INSTITUTION_ID.into(),
            generated_at: Timestamp::from_epoch(1_735_689_599).unwrap(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct TrailerSummary {
    pub record_count: u64,
    pub ledger_balance: Money,
    pub balance_as_of: Timestamp,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Phase {
    #[default]
    Fresh,
    Records,
    Done,
}

/// Running count and balance, plus phase-order checks shared by every format.
#[derive(Debug, Default)]
pub(crate) struct Running {
    phase: Phase,
    count: u64,
    balance: i64,
    as_of: Option<Timestamp>,
}

impl Running {
    fn begin(&mut self, ctx: &ExportContext) {
        assert_eq!(self.phase, Phase::Fresh, "header written twice");
        self.phase = Phase::Records;
        self.as_of = Some(ctx.date_to);
    }

    fn record(&mut self, rec: &ExportRecord<'_>) {
        assert_eq!(self.phase, Phase::Records, "record written outside the record phase");
        self.count += 1;
        self.balance = self.balance.checked_add(rec.amount.minor_units()).expect("ledger balance overflow");
    }

    fn end(&mut self) {
        assert_eq!(self.phase, Phase::Records, "trailer written out of order");
        self.phase = Phase::Done;
    }

    fn summary(&self) -> TrailerSummary {
        TrailerSummary {
            record_count: self.count,
            ledger_balance: Money::from_minor(self.balance),
            balance_as_of: self.as_of.expect("summary requested before header"),
        }
    }
}

/// The encode and serialize stages for one export format. An instance is
/// confined to a single export since it carries running totals.
///
/// # Panics
///
/// Implementations panic when phases are called out of order.
pub trait RecordSerializer: Send {
    fn format(&self) -> ExportFormat;

    fn media_type(&self) -> &'static str {
        media_type(self.format())
    }

    fn write_header(&mut self, ctx: &ExportContext, out: &mut Vec<u8>);

    fn write_record(&mut self, rec: &ExportRecord<'_>, out: &mut Vec<u8>);

    fn write_trailer(&mut self, summary: &TrailerSummary, out: &mut Vec<u8>);

    /// Totals over the records written so far; `balance_as_of` is the
    /// context's `date_to`.
    fn summary(&self) -> TrailerSummary;

    fn phase(&self) -> Phase;
}

/// HTTP `Content-Type` for a format.
pub fn media_type(format: ExportFormat) -> &'static str {
    match format {
        ExportFormat::Csv => "text/csv",
        ExportFormat::Ofx | ExportFormat::Qfx => "application/x-ofx",
        ExportFormat::Qbo => "application/vnd.intu.qbo",
    }
}

/// A fresh serializer for `format`.
pub fn registry_lookup(format: ExportFormat) -> Box<dyn RecordSerializer> {
    match format {
        ExportFormat::Csv => Box::new(CsvSerializer::new()),
        ExportFormat::Ofx => Box::new(OfxSerializer::new(OfxVariant::Ofx)),
        ExportFormat::Qfx => Box::new(OfxSerializer::new(OfxVariant::Qfx)),
        ExportFormat::Qbo => Box::new(OfxSerializer::new(OfxVariant::Qbo)),
    }
}

/// Lookup by format name, for callers that have not validated the name.
pub fn lookup_by_name(name: &str) -> Result<Box<dyn RecordSerializer>, UnknownFormat> {
    name.parse::<ExportFormat>().map(registry_lookup)
}

/// Serializes a whole record list in memory. Used by tests and by the
/// buffered engine's callers as a reference.
pub fn serialize_all<'a>(
    format: ExportFormat,
    ctx: &ExportContext,
    records: impl IntoIterator<Item = ExportRecord<'a>>,
) -> Vec<u8> {
    let mut ser = registry_lookup(format);
    let mut out = Vec::new();
    ser.write_header(ctx, &mut out);
    for r in records {
        ser.write_record(&r, &mut out);
    }
    let summary = ser.summary();
    ser.write_trailer(&summary, &mut out);
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::domain::{map_record, TransactionRecord};
    use proptest::prelude::*;

    #[test]
    fn registry_resolves_every_format() {
        for f in ExportFormat::ALL {
            assert_eq!(registry_lookup(f).format(), f);
        }
        assert_eq!(registry_lookup(ExportFormat::Csv).media_type(), "text/csv");
        assert_eq!(media_type(ExportFormat::Ofx), "application/x-ofx");
        assert_eq!(media_type(ExportFormat::Qfx), "application/x-ofx");
        assert_eq!(media_type(ExportFormat::Qbo), "application/vnd.intu.qbo");
        assert!(lookup_by_name("pdf").is_err());
        assert_eq!(lookup_by_name("QBO").unwrap().format(), ExportFormat::Qbo);
    }

    #[test]
    fn context_ignores_format_and_correlation() {
        let t = |s| Timestamp::from_epoch(s).unwrap();
        let a = ExportRequest::new("A1", t(0), t(100), ExportFormat::Ofx).unwrap();
        let b = ExportRequest::new("A1", t(0), t(100), ExportFormat::Qbo).unwrap();
        assert_eq!(ExportContext::for_request(&a), ExportContext::for_request(&b));
        let c = ExportRequest::new("A1", t(0), t(101), ExportFormat::Ofx).unwrap();
        assert_ne!(ExportContext::for_request(&a).file_uid, ExportContext::for_request(&c).file_uid);
        assert_eq!(ExportContext::for_request(&a).generated_at, t(100));
    }

    #[test]
    #[should_panic(expected = "record written outside")]
    fn record_before_header_panics() {
        let row = TransactionRecord::new("T", "A", Timestamp::from_epoch(0).unwrap(), Money::ZERO, "").unwrap();
        CsvSerializer::new().write_record(&map_record(&row), &mut Vec::new());
    }

    fn arb_row() -> impl Strategy<Value = TransactionRecord> {
        ("[A-Za-z0-9-]{1,64}", -1_000_000_000_000i64..1_000_000_000_000, 0i64..4_000_000_000, "[ -~\t\r\n]{0,255}")
            .prop_map(|(id, amt, t, d)| {
                TransactionRecord::new(id, "ACC", Timestamp::from_epoch(t).unwrap(), Money::from_minor(amt), d).unwrap()
            })
    }

    proptest! {
        #[test]
        fn single_record_output_is_bounded(row in arb_row()) {
            for f in ExportFormat::ALL {
                let mut ser = registry_lookup(f);
                ser.write_header(&ExportContext::fixed_for_tests(), &mut Vec::new());
                let mut out = Vec::new();
                ser.write_record(&map_record(&row), &mut out);
                prop_assert!(out.len() <= 2048, "{} bytes", out.len());
            }
        }

        #[test]
        fn variants_differ_only_in_branding(rows in proptest::collection::vec(arb_row(), 0..8)) {
            let ctx = ExportContext::fixed_for_tests();
            let ofx = serialize_all(ExportFormat::Ofx, &ctx, rows.iter().map(map_record));
            for f in [ExportFormat::Qfx, ExportFormat::Qbo] {
                let branded = String::from_utf8(serialize_all(f, &ctx, rows.iter().map(map_record))).unwrap();
                prop_assert_eq!(branded.replacen("<INTU.BID>2430\n", "", 1).into_bytes(), ofx.clone());
            }
        }
    }
}
