use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Number of decimal digits carried by every amount in this crate.
pub const MONEY_SCALE: u8 = 2;

/// A fixed-point monetary amount stored as signed minor units (cents).
///
/// Amounts never pass through floating point. Negative values are debits.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Default, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Money {
    minor_units: i64,
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("invalid decimal amount {input:?}")]
pub struct ParseMoneyError {
    input: String,
}

impl Money {
    pub const ZERO: Money = Money { minor_units: 0 };

    pub const fn from_minor(minor_units: i64) -> Self {
        Self { minor_units }
    }

    pub const fn minor_units(self) -> i64 {
        self.minor_units
    }

    pub const fn scale(self) -> u8 {
        MONEY_SCALE
    }

    pub fn is_negative(self) -> bool {
        self.minor_units < 0
    }

    pub fn checked_add(self, other: Money) -> Option<Money> {
        self.minor_units.checked_add(other.minor_units).map(Money::from_minor)
    }

    /// Appends the decimal rendering (`-1234.56`, `0.05`, `0.00`) to `out`.
    pub fn render_into(self, out: &mut String) {
        use fmt::Write;
        let abs = self.minor_units.unsigned_abs();
        if self.minor_units < 0 {
            out.push('-');
        }
        let _ = write!(out, "{}.{:02}", abs / 100, abs % 100);
    }
}

/// Renders an amount as a plain decimal string with exactly two fraction digits.
pub fn render_money(m: Money) -> String {
    let mut s = String::with_capacity(24);
    m.render_into(&mut s);
    s
}

impl fmt::Display for Money {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&render_money(*self))
    }
}

impl FromStr for Money {
    type Err = ParseMoneyError;

    /// Strict inverse of [`render_money`]: optional `-`, integer part without
    /// leading zeros, `.`, exactly two digits. `-0.00` is rejected.
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let err = || ParseMoneyError { input: s.to_owned() };
        let (negative, body) = match s.strip_prefix('-') {
            Some(rest) => (true, rest),
            None => (false, s),
        };
        let (int_part, frac_part) = body.split_once('.').ok_or_else(err)?;
        let all_digits = |p: &str| !p.is_empty() && p.bytes().all(|b| b.is_ascii_digit());
        if !all_digits(int_part) || frac_part.len() != 2 || !all_digits(frac_part) {
            return Err(err());
        }
        if int_part.len() > 1 && int_part.starts_with('0') {
            return Err(err());
        }
        let int: u64 = int_part.parse().map_err(|_| err())?;
        let frac: u64 = frac_part.parse().map_err(|_| err())?;
        let abs = int.checked_mul(100).and_then(|v| v.checked_add(frac)).ok_or_else(err)?;
        if negative && abs == 0 {
            return Err(err());
        }
        let minor = if negative {
            0i64.checked_sub_unsigned(abs).ok_or_else(err)?
        } else {
            i64::try_from(abs).map_err(|_| err())?
        };
        Ok(Money::from_minor(minor))
    }
}
