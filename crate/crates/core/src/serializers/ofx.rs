//! OFX 1.02 SGML bank statement writer. QFX and QBO are the same document
//! with an `<INTU.BID>` element in the sign-on response.
//!
//! Leaf elements are left unclosed and aggregates are closed, one element per
//! line, LF line endings. The file ends with `</OFX>` and no newline.

use std::fmt::Write as _;

use super::{ExportContext, Phase, RecordSerializer, Running, TrailerSummary};
use crate::domain::{ExportFormat, ExportRecord};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum OfxVariant {
    Ofx,
    Qfx,
    Qbo,
}

impl OfxVariant {
    pub fn format(self) -> ExportFormat {
        match self {
            OfxVariant::Ofx => ExportFormat::Ofx,
            OfxVariant::Qfx => ExportFormat::Qfx,
            OfxVariant::Qbo => ExportFormat::Qbo,
        }
    }

    pub fn intuit_branded(self) -> bool {
        !matches!(self, OfxVariant::Ofx)
    }
}

/// Escapes `&`, `<` and `>` for element content.
pub fn escape_text(s: &str, out: &mut String) {
    for c in s.chars() {
        match c {
            '&' => out.push_str("&amp;"),
            '<' => out.push_str("&lt;"),
            '>' => out.push_str("&gt;"),
            c => out.push(c),
        }
    }
}

#[derive(Debug)]
pub struct OfxSerializer {
    variant: OfxVariant,
    running: Running,
    scratch: String,
}

impl OfxSerializer {
    pub fn new(variant: OfxVariant) -> Self {
        Self { variant, running: Running::default(), scratch: String::with_capacity(512) }
    }

    pub fn variant(&self) -> OfxVariant {
        self.variant
    }
}

fn header_text(ctx: &ExportContext, variant: OfxVariant) -> String {
    let mut s = String::with_capacity(768);
    let _ = write!(
        s,
        "OFXHEADER:100\n\
         DATA:OFXSGML\n\
         VERSION:102\n\
         SECURITY:NONE\n\
         ENCODING:USASCII\n\
         CHARSET:1252\n\
         COMPRESSION:NONE\n\
         OLDFILEUID:NONE\n\
         NEWFILEUID:{uid}\n\
         \n\
         <OFX>\n\
         <SIGNONMSGSRSV1>\n\
         <SONRS>\n\
         <STATUS>\n\
         <CODE>0\n\
         <SEVERITY>INFO\n\
         </STATUS>\n\
         <DTSERVER>{dtserver}\n\
         <LANGUAGE>ENG\n",
        uid = ctx.file_uid,
        dtserver = ctx.generated_at.to_ofx(),
    );
    if variant.intuit_branded() {
        let _ = writeln!(s, "<INTU.BID>{}", ctx.institution_id);
    }
    let _ = write!(
        s,
        "</SONRS>\n\
         </SIGNONMSGSRSV1>\n\
         <BANKMSGSRSV1>\n\
         <STMTTRNRS>\n\
         <TRNUID>{uid}\n\
         <STATUS>\n\
         <CODE>0\n\
         <SEVERITY>INFO\n\
         </STATUS>\n\
         <STMTRS>\n\
         <CURDEF>{currency}\n\
         <BANKACCTFROM>\n\
         <BANKID>{bank}\n\
         <ACCTID>{acct}\n\
         <ACCTTYPE>CHECKING\n\
         </BANKACCTFROM>\n\
         <BANKTRANLIST>\n\
         <DTSTART>{start}\n\
         <DTEND>{end}\n",
        uid = ctx.file_uid,
        currency = ctx.currency,
        bank = ctx.institution_id,
        acct = ctx.account_id,
        start = ctx.date_from.to_ofx(),
        end = ctx.date_to.to_ofx(),
    );
    s
}

impl RecordSerializer for OfxSerializer {
    fn format(&self) -> ExportFormat {
        self.variant.format()
    }

    fn write_header(&mut self, ctx: &ExportContext, out: &mut Vec<u8>) {
        self.running.begin(ctx);
        out.extend_from_slice(header_text(ctx, self.variant).as_bytes());
    }

    fn write_record(&mut self, rec: &ExportRecord<'_>, out: &mut Vec<u8>) {
        self.running.record(rec);
        let s = &mut self.scratch;
        s.clear();
        s.push_str("<STMTTRN>\n<TRNTYPE>");
        s.push_str(rec.txn_type.as_str());
        s.push_str("\n<DTPOSTED>");
        s.push_str(&rec.posted_at.to_ofx());
        s.push_str("\n<TRNAMT>");
        rec.amount.render_into(s);
        s.push_str("\n<FITID>");
        s.push_str(rec.txn_id);
        s.push_str("\n<MEMO>");
        escape_text(rec.description, s);
        s.push_str("\n</STMTTRN>\n");
        out.extend_from_slice(s.as_bytes());
    }

    fn write_trailer(&mut self, summary: &TrailerSummary, out: &mut Vec<u8>) {
        self.running.end();
        let text = format!(
            "</BANKTRANLIST>\n\
             <LEDGERBAL>\n\
             <BALAMT>{}\n\
             <DTASOF>{}\n\
             </LEDGERBAL>\n\
             </STMTRS>\n\
             </STMTTRNRS>\n\
             </BANKMSGSRSV1>\n\
             </OFX>",
            summary.ledger_balance,
            summary.balance_as_of.to_ofx(),
        );
        out.extend_from_slice(text.as_bytes());
    }

    fn summary(&self) -> TrailerSummary {
        self.running.summary()
    }

    fn phase(&self) -> Phase {
        self.running.phase
    }
}
