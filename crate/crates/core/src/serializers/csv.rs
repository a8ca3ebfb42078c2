use super::{ExportContext, Phase, RecordSerializer, Running, TrailerSummary};
use crate::domain::{ExportFormat, ExportRecord};

pub const CSV_HEADER: &str = "txn_id,posted_at,account_id,type,amount,currency,description\r\n";

/// Appends `field`, quoting it when it contains a comma, double quote, CR or
/// LF. Embedded quotes are doubled.
pub fn push_field(out: &mut Vec<u8>, field: &str) {
    if field.bytes().any(|b| matches!(b, b',' | b'"' | b'\r' | b'\n')) {
        out.push(b'"');
        for b in field.bytes() {
            if b == b'"' {
                out.push(b'"');
            }
            out.push(b);
        }
        out.push(b'"');
    } else {
        out.extend_from_slice(field.as_bytes());
    }
}

/// CSV with CRLF line endings and a `#END,count=N,balance=B` completeness line.
#[derive(Debug, Default)]
pub struct CsvSerializer {
    running: Running,
}

impl CsvSerializer {
    pub fn new() -> Self {
        Self::default()
    }
}

impl RecordSerializer for CsvSerializer {
    fn format(&self) -> ExportFormat {
        ExportFormat::Csv
    }

    fn write_header(&mut self, ctx: &ExportContext, out: &mut Vec<u8>) {
        self.running.begin(ctx);
        out.extend_from_slice(CSV_HEADER.as_bytes());
    }

    fn write_record(&mut self, rec: &ExportRecord<'_>, out: &mut Vec<u8>) {
        self.running.record(rec);
        let mut amount = String::with_capacity(24);
        rec.amount.render_into(&mut amount);
        push_field(out, rec.txn_id);
        out.push(b',');
        out.extend_from_slice(rec.posted_at.to_iso8601().as_bytes());
        out.push(b',');
        push_field(out, rec.account_id);
        out.push(b',');
        out.extend_from_slice(rec.txn_type.as_str().as_bytes());
        out.push(b',');
        out.extend_from_slice(amount.as_bytes());
        out.push(b',');
        out.extend_from_slice(rec.currency.as_bytes());
        out.push(b',');
        push_field(out, rec.description);
        out.extend_from_slice(b"\r\n");
    }

    fn write_trailer(&mut self, summary: &TrailerSummary, out: &mut Vec<u8>) {
        self.running.end();
        out.extend_from_slice(
            format!("#END,count={},balance={}\r\n", summary.record_count, summary.ledger_balance).as_bytes(),
        );
    }

    fn summary(&self) -> TrailerSummary {
        self.running.summary()
    }

    fn phase(&self) -> Phase {
        self.running.phase
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::domain::{map_record, Money, Timestamp, TransactionRecord};

    fn rec_bytes(desc: &str) -> String {
        let row = TransactionRecord::new(
            "T1",
            "A1",
            Timestamp::from_epoch(1_704_067_200).unwrap(),
            Money::from_minor(-1250),
            desc,
        )
        .unwrap();
        let mut s = CsvSerializer::new();
        let mut out = Vec::new();
        s.write_header(&ExportContext::fixed_for_tests(), &mut Vec::new());
        s.write_record(&map_record(&row), &mut out);
        String::from_utf8(out).unwrap()
    }

    #[test]
    fn quotes_only_when_needed() {
        assert_eq!(rec_bytes("plain"), "T1,2024-01-01T00:00:00Z,A1,DEBIT,-12.50,USD,plain\r\n");
        assert_eq!(
            rec_bytes("Coffee, \"large\""),
            "T1,2024-01-01T00:00:00Z,A1,DEBIT,-12.50,USD,\"Coffee, \"\"large\"\"\"\r\n"
        );
        assert!(rec_bytes("a\nb").ends_with(",\"a\nb\"\r\n"));
        assert!(rec_bytes("a\rb").ends_with(",\"a\rb\"\r\n"));
        assert!(rec_bytes("").ends_with(",USD,\r\n"));
    }

    #[test]
    fn trailer_lines() {
        let mut out = Vec::new();
        let mut s = CsvSerializer::new();
        s.write_header(&ExportContext::fixed_for_tests(), &mut out);
        s.write_trailer(&s.summary(), &mut out);
        assert!(out.ends_with(b"#END,count=0,balance=0.00\r\n"));

        let mut s = CsvSerializer::new();
        s.write_header(&ExportContext::fixed_for_tests(), &mut Vec::new());
        for i in 0..3 {
            let row = TransactionRecord::new(
                format!("T{i}"),
                "A1",
                Timestamp::from_epoch(0).unwrap(),
                Money::from_minor(100),
                "x",
            )
            .unwrap();
            s.write_record(&map_record(&row), &mut Vec::new());
        }
        let mut out = Vec::new();
        s.write_trailer(&s.summary(), &mut out);
        assert_eq!(out, b"#END,count=3,balance=3.00\r\n");
    }
}
