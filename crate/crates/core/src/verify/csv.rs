use super::{
    parse_decimal, parse_iso_utc, type_matches_sign, valid_txn_id, Tally, VerifiedRecord, VerifyResult, VerifyStatus,
};

const HEADER: &[u8] = b"txn_id,posted_at,account_id,type,amount,currency,description\r\n";
const FIELD_COUNT: usize = 7;

enum Scan {
    /// Record fields and the offset just past its CRLF.
    Record(Vec<String>, usize),
    Incomplete,
    Malformed(usize, &'static str),
}

/// Reads one RFC 4180 record starting at `pos`.
fn scan_record(data: &[u8], mut pos: usize) -> Scan {
    let mut fields = Vec::with_capacity(FIELD_COUNT);
    let mut field = Vec::new();
    loop {
        if pos >= data.len() {
            return Scan::Incomplete;
        }
        if data[pos] == b'"' {
            pos += 1;
            loop {
                match data.get(pos) {
                    None => return Scan::Incomplete,
                    Some(b'"') => match data.get(pos + 1) {
                        Some(b'"') => {
                            field.push(b'"');
                            pos += 2;
                        }
                        None => return Scan::Incomplete,
                        Some(_) => {
                            pos += 1;
                            break;
                        }
                    },
                    Some(&b) => {
                        field.push(b);
                        pos += 1;
                    }
                }
            }
            match data.get(pos) {
                Some(b',') | Some(b'\r') => {}
                None => return Scan::Incomplete,
                Some(_) => return Scan::Malformed(pos, "text after closing quote"),
            }
        } else {
            while let Some(&b) = data.get(pos) {
                match b {
                    b',' | b'\r' => break,
                    b'"' => return Scan::Malformed(pos, "quote inside unquoted field"),
                    b'\n' => return Scan::Malformed(pos, "bare LF in unquoted field"),
                    _ => {
                        field.push(b);
                        pos += 1;
                    }
                }
            }
        }
        let Ok(text) = String::from_utf8(std::mem::take(&mut field)) else {
            return Scan::Malformed(pos, "invalid UTF-8");
        };
        fields.push(text);
        match data.get(pos) {
            None => return Scan::Incomplete,
            Some(b',') => pos += 1,
            Some(b'\r') => match data.get(pos + 1) {
                None => return Scan::Incomplete,
                Some(b'\n') => return Scan::Record(fields, pos + 2),
                Some(_) => return Scan::Malformed(pos, "CR without LF"),
            },
            Some(_) => unreachable!(),
        }
    }
}

fn decode_record(fields: Vec<String>) -> Result<VerifiedRecord, &'static str> {
    if fields.len() != FIELD_COUNT {
        return Err("wrong field count");
    }
    let mut it = fields.into_iter();
    let mut next = || it.next().unwrap();
    let (txn_id, posted, account_id, txn_type, amount, currency, description) =
        (next(), next(), next(), next(), next(), next(), next());
    if !valid_txn_id(&txn_id) {
        return Err("bad txn_id");
    }
    if account_id.is_empty() {
        return Err("empty account_id");
    }
    let posted_at = parse_iso_utc(posted.as_bytes()).ok_or("bad posted_at")?;
    let amount_minor = parse_decimal(amount.as_bytes()).ok_or("bad amount")?;
    if !type_matches_sign(&txn_type, amount_minor) {
        return Err("type does not match amount sign");
    }
    if currency.len() != 3 || !currency.bytes().all(|b| b.is_ascii_uppercase()) {
        return Err("bad currency");
    }
    Ok(VerifiedRecord { txn_id, posted_at, account_id, txn_type, amount_minor, currency, description })
}

/// `#END,count=<N>,balance=<B>`
fn parse_trailer(line: &[u8]) -> Option<(u64, i64)> {
    let rest = line.strip_prefix(b"#END,count=")?;
    let comma = rest.iter().position(|&b| b == b',')?;
    let count_digits = &rest[..comma];
    if count_digits.is_empty()
        || !count_digits.iter().all(u8::is_ascii_digit)
        || (count_digits.len() > 1 && count_digits[0] == b'0')
    {
        return None;
    }
    let count = std::str::from_utf8(count_digits).ok()?.parse().ok()?;
    let balance = parse_decimal(rest[comma + 1..].strip_prefix(b"balance=")?)?;
    Some((count, balance))
}

fn plausible_partial_trailer(partial: &[u8]) -> bool {
    const PREFIX: &[u8] = b"#END,count=";
    let n = partial.len().min(PREFIX.len());
    partial[..n] == PREFIX[..n] && partial[n..].iter().all(|b| b"0123456789,balance=.-\r".contains(b))
}

pub fn verify_csv(data: &[u8]) -> VerifyResult {
    verify_csv_with(data, |_, _| {})
}

/// Verifies a CSV export, handing each record and the offset just past it
/// to `on_record`.
pub fn verify_csv_with(data: &[u8], mut on_record: impl FnMut(VerifiedRecord, usize)) -> VerifyResult {
    let mut tally = Tally::default();
    let malformed = |tally: &Tally, at: usize, why: &str| {
        tally.finish(VerifyStatus::Malformed, None, None, Some(at as u64), Some(why.to_owned()))
    };

    if data.len() < HEADER.len() || !data.starts_with(HEADER) {
        let mismatch = data.iter().zip(HEADER).position(|(a, b)| a != b);
        return match mismatch {
            Some(at) => malformed(&tally, at, "bad header line"),
            None => tally.finish(VerifyStatus::Truncated, None, None, None, Some("inside header line".into())),
        };
    }

    let mut pos = HEADER.len();
    loop {
        if pos == data.len() {
            return tally.finish(VerifyStatus::Truncated, None, None, None, Some("no trailer".into()));
        }
        if data[pos] == b'#' {
            let line_end = data[pos..].windows(2).position(|w| w == b"\r\n").map(|i| pos + i);
            let Some(end) = line_end else {
                return if plausible_partial_trailer(&data[pos..]) {
                    tally.finish(VerifyStatus::Truncated, None, None, None, Some("inside trailer".into()))
                } else {
                    malformed(&tally, pos, "bad trailer")
                };
            };
            let Some((count, balance)) = parse_trailer(&data[pos..end]) else {
                return malformed(&tally, pos, "bad trailer");
            };
            if end + 2 != data.len() {
                return malformed(&tally, end + 2, "data after trailer");
            }
            let computed = i64::try_from(tally.balance).ok();
            if count != tally.count || computed != Some(balance) {
                return tally.finish(
                    VerifyStatus::Malformed,
                    Some(count),
                    Some(balance),
                    Some(pos as u64),
                    Some("trailer does not match records".into()),
                );
            }
            return tally.finish(VerifyStatus::Complete, Some(count), Some(balance), None, None);
        }
        match scan_record(data, pos) {
            Scan::Incomplete => {
                return tally.finish(VerifyStatus::Truncated, None, None, None, Some("inside record".into()))
            }
            Scan::Malformed(at, why) => return malformed(&tally, at, why),
            Scan::Record(fields, next) => match decode_record(fields) {
                Ok(rec) => {
                    tally.add(rec.amount_minor);
                    on_record(rec, next);
                    pos = next;
                }
                Err(why) => return malformed(&tally, pos, why),
            },
        }
    }
}
