use super::{
    parse_decimal, parse_ofx_datetime, type_matches_sign, valid_txn_id, Tally, VerifiedRecord, VerifyResult,
    VerifyStatus,
};

/// Prologue lines in order. `None` marks the NEWFILEUID line, whose value varies.
const PROLOGUE: [Option<&[u8]>; 10] = [
    Some(b"OFXHEADER:100"),
    Some(b"DATA:OFXSGML"),
    Some(b"VERSION:102"),
    Some(b"SECURITY:NONE"),
    Some(b"ENCODING:USASCII"),
    Some(b"CHARSET:1252"),
    Some(b"COMPRESSION:NONE"),
    Some(b"OLDFILEUID:NONE"),
    None,
    Some(b""),
];
const NEWFILEUID: &[u8] = b"NEWFILEUID:";

/// Aggregates and the parent each must appear under. Every other element is a leaf.
const AGGREGATES: &[(&str, &[&str])] = &[
    ("OFX", &[]),
    ("SIGNONMSGSRSV1", &["OFX"]),
    ("SONRS", &["SIGNONMSGSRSV1"]),
    ("STATUS", &["SONRS", "STMTTRNRS"]),
    ("BANKMSGSRSV1", &["OFX"]),
    ("STMTTRNRS", &["BANKMSGSRSV1"]),
    ("STMTRS", &["STMTTRNRS"]),
    ("BANKACCTFROM", &["STMTRS"]),
    ("BANKTRANLIST", &["STMTRS"]),
    ("STMTTRN", &["BANKTRANLIST"]),
    ("LEDGERBAL", &["STMTRS"]),
];

fn aggregate_parents(name: &str) -> Option<&'static [&'static str]> {
    AGGREGATES.iter().find(|(n, _)| *n == name).map(|(_, p)| *p)
}

fn is_name_byte(b: u8) -> bool {
    b.is_ascii_uppercase() || b.is_ascii_digit() || b == b'.'
}

/// Decodes `&amp;`, `&lt;` and `&gt;` in one pass.
fn unescape(raw: &[u8]) -> Option<String> {
    let mut out = Vec::with_capacity(raw.len());
    let mut i = 0;
    while i < raw.len() {
        if raw[i] == b'&' {
            let rest = &raw[i..];
            let (ch, len) = if rest.starts_with(b"&amp;") {
                (b'&', 5)
            } else if rest.starts_with(b"&lt;") {
                (b'<', 4)
            } else if rest.starts_with(b"&gt;") {
                (b'>', 4)
            } else {
                return None;
            };
            out.push(ch);
            i += len;
        } else if raw[i] == b'>' {
            return None;
        } else {
            out.push(raw[i]);
            i += 1;
        }
    }
    String::from_utf8(out).ok()
}

#[derive(Default)]
struct PendingTxn {
    fields: Vec<(String, String)>,
}

impl PendingTxn {
    fn take(&mut self, name: &str) -> Option<String> {
        let i = self.fields.iter().position(|(n, _)| n == name)?;
        Some(self.fields.swap_remove(i).1)
    }
}

#[derive(Default)]
struct Doc {
    stack: Vec<String>,
    closed_root: bool,
    txn: Option<PendingTxn>,
    account_id: Option<String>,
    currency: Option<String>,
    institution_id: Option<String>,
    ledger_balance: Option<i64>,
    ledger_as_of: bool,
    ledger_closed: bool,
    balance_offset: usize,
    list_closed: bool,
}

enum Stop {
    Complete,
    Truncated(&'static str),
    Malformed(usize, &'static str),
}

pub fn verify_ofx(data: &[u8]) -> VerifyResult {
    verify_ofx_with(data, |_, _| {})
}

/// Verifies an OFX, QFX or QBO export, handing each record and the offset
/// just past its `</STMTTRN>` to `on_record`.
pub fn verify_ofx_with(data: &[u8], mut on_record: impl FnMut(VerifiedRecord, usize)) -> VerifyResult {
    let mut tally = Tally::default();
    let mut doc = Doc::default();
    let stop = match check_prologue(data) {
        Ok(body) => walk(data, body, &mut doc, &mut tally, &mut on_record),
        Err(stop) => stop,
    };
    let declared_count = doc.list_closed.then_some(tally.count);
    let mut result = match stop {
        Stop::Complete => tally.finish(VerifyStatus::Complete, declared_count, doc.ledger_balance, None, None),
        Stop::Truncated(why) => {
            tally.finish(VerifyStatus::Truncated, declared_count, doc.ledger_balance, None, Some(why.into()))
        }
        Stop::Malformed(at, why) => {
            tally.finish(VerifyStatus::Malformed, declared_count, doc.ledger_balance, Some(at as u64), Some(why.into()))
        }
    };
    result.institution_id = doc.institution_id;
    result
}

/// Returns the offset where the body starts.
fn check_prologue(data: &[u8]) -> Result<usize, Stop> {
    let mut pos = 0;
    for expected in PROLOGUE {
        let rest = &data[pos..];
        let line_end = rest.iter().position(|&b| b == b'\n');
        let line = &rest[..line_end.unwrap_or(rest.len())];
        let ok_so_far = match expected {
            Some(exp) if line_end.is_some() => line == exp,
            Some(exp) => exp.starts_with(line),
            None => {
                let n = line.len().min(NEWFILEUID.len());
                line[..n] == NEWFILEUID[..n]
                    && line[n..].iter().all(u8::is_ascii_alphanumeric)
                    && (line_end.is_none() || line.len() > NEWFILEUID.len())
            }
        };
        if !ok_so_far {
            return Err(Stop::Malformed(pos, "bad header line"));
        }
        match line_end {
            Some(i) => pos += i + 1,
            None => return Err(Stop::Truncated("inside header")),
        }
    }
    Ok(pos)
}

fn walk(
    data: &[u8],
    mut pos: usize,
    doc: &mut Doc,
    tally: &mut Tally,
    on_record: &mut impl FnMut(VerifiedRecord, usize),
) -> Stop {
    loop {
        while pos < data.len() && doc.stack.last().is_some_and(|_| data[pos].is_ascii_whitespace()) {
            pos += 1;
        }
        if pos == data.len() {
            if !doc.closed_root {
                return Stop::Truncated("document not closed");
            }
            return finish(doc, tally);
        }
        if doc.closed_root {
            return Stop::Malformed(pos, "data after </OFX>");
        }
        if data[pos] != b'<' {
            return Stop::Malformed(pos, "expected a tag");
        }
        let tag_start = pos;
        let Some(gt) = data[pos..].iter().position(|&b| b == b'>').map(|i| pos + i) else {
            let partial = &data[pos + 1..];
            let partial = partial.strip_prefix(b"/").unwrap_or(partial);
            return if partial.iter().all(|&b| is_name_byte(b)) {
                Stop::Truncated("inside tag")
            } else {
                Stop::Malformed(pos, "bad tag")
            };
        };
        let raw = &data[pos + 1..gt];
        let (closing, name) = match raw.strip_prefix(b"/") {
            Some(n) => (true, n),
            None => (false, raw),
        };
        if name.is_empty() || !name.iter().all(|&b| is_name_byte(b)) {
            return Stop::Malformed(pos, "bad tag name");
        }
        let name = std::str::from_utf8(name).unwrap();
        pos = gt + 1;

        if closing {
            if doc.stack.last().map(String::as_str) != Some(name) {
                return Stop::Malformed(tag_start, "mismatched closing tag");
            }
            doc.stack.pop();
            match name {
                "STMTTRN" => {
                    let txn = doc.txn.take().unwrap_or_default();
                    match finish_txn(txn, doc) {
                        Ok(rec) => {
                            tally.add(rec.amount_minor);
                            on_record(rec, pos);
                        }
                        Err(why) => return Stop::Malformed(tag_start, why),
                    }
                }
                "BANKTRANLIST" => doc.list_closed = true,
                "LEDGERBAL" => {
                    if doc.ledger_balance.is_none() || !doc.ledger_as_of {
                        return Stop::Malformed(tag_start, "incomplete LEDGERBAL");
                    }
                    doc.ledger_closed = true;
                }
                "OFX" => doc.closed_root = true,
                _ => {}
            }
            continue;
        }

        let parent = doc.stack.last().map(String::as_str);
        if let Some(parents) = aggregate_parents(name) {
            let placed = match parent {
                None => parents.is_empty() && name == "OFX",
                Some(p) => parents.contains(&p),
            };
            if !placed {
                return Stop::Malformed(tag_start, "aggregate out of place");
            }
            if name == "STMTTRN" {
                doc.txn = Some(PendingTxn::default());
            }
            if name == "LEDGERBAL" && !doc.list_closed {
                return Stop::Malformed(tag_start, "LEDGERBAL before end of transaction list");
            }
            doc.stack.push(name.to_owned());
            continue;
        }

        let Some(parent) = parent else {
            return Stop::Malformed(tag_start, "element outside <OFX>");
        };
        let Some(lt) = data[pos..].iter().position(|&b| b == b'<').map(|i| pos + i) else {
            return Stop::Truncated("inside element value");
        };
        let mut raw_value = &data[pos..lt];
        if let Some(v) = raw_value.strip_suffix(b"\n") {
            raw_value = v;
        }
        let value_at = pos;
        pos = lt;
        let Some(value) = unescape(raw_value) else {
            return Stop::Malformed(value_at, "bad character data");
        };
        match (parent, name) {
            ("STMTTRN", _) => {
                let txn = doc.txn.get_or_insert_with(PendingTxn::default);
                if txn.fields.iter().any(|(n, _)| n == name) {
                    return Stop::Malformed(tag_start, "repeated transaction field");
                }
                txn.fields.push((name.to_owned(), value));
            }
            ("SONRS", "INTU.BID") => doc.institution_id = Some(value),
            ("BANKACCTFROM", "ACCTID") => doc.account_id = Some(value),
            ("STMTRS", "CURDEF") => doc.currency = Some(value),
            ("LEDGERBAL", "BALAMT") => match parse_decimal(value.as_bytes()) {
                Some(b) => {
                    doc.ledger_balance = Some(b);
                    doc.balance_offset = tag_start;
                }
                None => return Stop::Malformed(value_at, "bad BALAMT"),
            },
            ("LEDGERBAL", "DTASOF") => {
                if parse_ofx_datetime(value.as_bytes()).is_none() {
                    return Stop::Malformed(value_at, "bad DTASOF");
                }
                doc.ledger_as_of = true;
            }
            _ => {}
        }
    }
}

fn finish_txn(mut txn: PendingTxn, doc: &Doc) -> Result<VerifiedRecord, &'static str> {
    let txn_type = txn.take("TRNTYPE").ok_or("missing TRNTYPE")?;
    let posted = txn.take("DTPOSTED").ok_or("missing DTPOSTED")?;
    let amount = txn.take("TRNAMT").ok_or("missing TRNAMT")?;
    let txn_id = txn.take("FITID").ok_or("missing FITID")?;
    let description = txn.take("MEMO").unwrap_or_default();
    let posted_at = parse_ofx_datetime(posted.as_bytes()).ok_or("bad DTPOSTED")?;
    let amount_minor = parse_decimal(amount.as_bytes()).ok_or("bad TRNAMT")?;
    if !valid_txn_id(&txn_id) {
        return Err("bad FITID");
    }
    if !type_matches_sign(&txn_type, amount_minor) {
        return Err("TRNTYPE does not match amount sign");
    }
    Ok(VerifiedRecord {
        txn_id,
        posted_at,
        account_id: doc.account_id.clone().unwrap_or_default(),
        txn_type,
        amount_minor,
        currency: doc.currency.clone().unwrap_or_default(),
        description,
    })
}

fn finish(doc: &Doc, tally: &Tally) -> Stop {
    if !doc.list_closed || !doc.ledger_closed {
        return Stop::Malformed(0, "statement is missing BANKTRANLIST or LEDGERBAL");
    }
    if i64::try_from(tally.balance).ok() != doc.ledger_balance {
        return Stop::Malformed(doc.balance_offset, "BALAMT does not match records");
    }
    Stop::Complete
}
