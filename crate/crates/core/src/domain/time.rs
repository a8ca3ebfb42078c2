use std::fmt;

use chrono::{DateTime, NaiveDateTime, Utc};
use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Earliest representable instant: 0000-01-01T00:00:00Z.
const MIN_EPOCH: i64 = -62_167_219_200;
/// Latest representable instant: 9999-12-31T23:59:59Z.
const MAX_EPOCH: i64 = 253_402_300_799;

/// A UTC instant with second precision, stored as epoch seconds.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Timestamp(i64);

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum TimestampError {
    #[error("epoch second {0} is outside years 0000..=9999")]
    OutOfRange(i64),
    #[error("unparseable timestamp {0:?}")]
    Unparseable(String),
}

impl Timestamp {
    pub fn from_epoch(secs: i64) -> Result<Self, TimestampError> {
        if (MIN_EPOCH..=MAX_EPOCH).contains(&secs) {
            Ok(Self(secs))
        } else {
            Err(TimestampError::OutOfRange(secs))
        }
    }

    pub const fn epoch_seconds(self) -> i64 {
        self.0
    }

    /// Parses an RFC 3339 timestamp. Offsets are normalized to UTC and
    /// fractional seconds are truncated.
    pub fn parse_rfc3339(s: &str) -> Result<Self, TimestampError> {
        let dt = DateTime::parse_from_rfc3339(s).map_err(|_| TimestampError::Unparseable(s.to_owned()))?;
        Self::from_epoch(dt.timestamp())
    }

    fn datetime(self) -> NaiveDateTime {
        // range is checked at construction
        DateTime::<Utc>::from_timestamp(self.0, 0).expect("timestamp within chrono range").naive_utc()
    }

    /// `YYYY-MM-DDThh:mm:ssZ`
    pub fn to_iso8601(self) -> String {
        self.datetime().format("%Y-%m-%dT%H:%M:%SZ").to_string()
    }

    /// `YYYYMMDDHHMMSS`, the OFX date-time form.
    pub fn to_ofx(self) -> String {
        self.datetime().format("%Y%m%d%H%M%S").to_string()
    }

    /// `YYYY-MM-DD`
    pub fn to_date(self) -> String {
        self.datetime().format("%Y-%m-%d").to_string()
    }
}

impl fmt::Display for Timestamp {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.to_iso8601())
    }
}
