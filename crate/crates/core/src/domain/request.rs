use std::collections::HashMap;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::record::is_valid_account_id;
use super::Timestamp;

pub const DEFAULT_FETCH_SIZE: u32 = 500;
pub const MAX_FETCH_SIZE: u32 = 10_000;
const MAX_CORRELATION_ID_LEN: usize = 128;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ExportFormat {
    Csv,
    Ofx,
    Qfx,
    Qbo,
}

impl ExportFormat {
    pub const ALL: [ExportFormat; 4] = [ExportFormat::Csv, ExportFormat::Ofx, ExportFormat::Qfx, ExportFormat::Qbo];

    /// Lowercase name, also used as the file extension.
    pub fn as_str(self) -> &'static str {
        match self {
            ExportFormat::Csv => "csv",
            ExportFormat::Ofx => "ofx",
            ExportFormat::Qfx => "qfx",
            ExportFormat::Qbo => "qbo",
        }
    }

    pub fn extension(self) -> &'static str {
        self.as_str()
    }

    pub fn is_ofx_family(self) -> bool {
        !matches!(self, ExportFormat::Csv)
    }
}

impl fmt::Display for ExportFormat {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("unknown export format {0:?} (expected csv, ofx, qfx or qbo)")]
pub struct UnknownFormat(pub String);

impl FromStr for ExportFormat {
    type Err = UnknownFormat;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "csv" => Ok(ExportFormat::Csv),
            "ofx" => Ok(ExportFormat::Ofx),
            "qfx" => Ok(ExportFormat::Qfx),
            "qbo" => Ok(ExportFormat::Qbo),
            _ => Err(UnknownFormat(s.to_owned())),
        }
    }
}

/// Fully validated export parameters.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct ExportRequest {
    pub account_id: String,
    pub date_from: Timestamp,
    pub date_to: Timestamp,
    pub format: ExportFormat,
    pub fetch_size: u32,
    pub max_rows: Option<u64>,
    pub correlation_id: String,
}

impl ExportRequest {
    /// Builds a request directly, applying the same rules as [`validate_request`].
    pub fn new(
        account_id: impl Into<String>,
        date_from: Timestamp,
        date_to: Timestamp,
        format: ExportFormat,
    ) -> Result<Self, ValidationError> {
        let account_id = account_id.into();
        let mut errors = Vec::new();
        if !is_valid_account_id(&account_id) {
            errors.push(FieldError::new("account_id", "must be 1-64 characters of [A-Za-z0-9._-]"));
        }
        if date_from > date_to {
            errors.push(FieldError::new("date_range", "from must not be after to"));
        }
        if !errors.is_empty() {
            return Err(ValidationError { errors });
        }
        Ok(Self {
            account_id,
            date_from,
            date_to,
            format,
            fetch_size: DEFAULT_FETCH_SIZE,
            max_rows: None,
            correlation_id: new_correlation_id(),
        })
    }

    pub fn with_fetch_size(mut self, fetch_size: u32) -> Self {
        assert!((1..=MAX_FETCH_SIZE).contains(&fetch_size), "fetch_size out of range");
        self.fetch_size = fetch_size;
        self
    }

    pub fn with_max_rows(mut self, max_rows: Option<u64>) -> Self {
        assert!(max_rows != Some(0), "max_rows must be positive");
        self.max_rows = max_rows;
        self
    }

    pub fn with_correlation_id(mut self, id: impl Into<String>) -> Self {
        self.correlation_id = id.into();
        self
    }
}

pub fn new_correlation_id() -> String {
    uuid::Uuid::new_v4().to_string()
}

/// Accepts printable ASCII without spaces, up to 128 bytes.
pub fn is_valid_correlation_id(s: &str) -> bool {
    (1..=MAX_CORRELATION_ID_LEN).contains(&s.len()) && s.bytes().all(|b| b.is_ascii_graphic())
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct FieldError {
    pub field: &'static str,
    pub message: String,
}

impl FieldError {
    fn new(field: &'static str, message: impl Into<String>) -> Self {
        Self { field, message: message.into() }
    }
}

/// Every invalid field of a rejected request.
#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub struct ValidationError {
    pub errors: Vec<FieldError>,
}

impl ValidationError {
    pub fn fields(&self) -> impl Iterator<Item = &'static str> + '_ {
        self.errors.iter().map(|e| e.field)
    }

    pub fn has_field(&self, field: &str) -> bool {
        self.errors.iter().any(|e| e.field == field)
    }
}

impl fmt::Display for ValidationError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str("invalid export request: ")?;
        for (i, e) in self.errors.iter().enumerate() {
            if i > 0 {
                f.write_str("; ")?;
            }
            write!(f, "{}: {}", e.field, e.message)?;
        }
        Ok(())
    }
}

/// Request validation with a configurable default fetch size.
#[derive(Debug, Clone, Copy)]
pub struct RequestValidator {
    pub default_fetch_size: u32,
}

impl Default for RequestValidator {
    fn default() -> Self {
        Self { default_fetch_size: DEFAULT_FETCH_SIZE }
    }
}

impl RequestValidator {
    /// Recognized keys: `account_id`, `format`, `from`, `to`, `fetch_size`,
    /// `max_rows`, `correlation_id`. Other keys are ignored.
    pub fn validate(&self, raw: &HashMap<String, String>) -> Result<ExportRequest, ValidationError> {
        let mut errors = Vec::new();
        let get = |k: &str| raw.get(k).map(String::as_str);

        let account_id = match get("account_id") {
            None | Some("") => {
                errors.push(FieldError::new("account_id", "required"));
                None
            }
            Some(a) if !is_valid_account_id(a) => {
                errors.push(FieldError::new("account_id", "must be 1-64 characters of [A-Za-z0-9._-]"));
                None
            }
            Some(a) => Some(a.to_owned()),
        };

        let format = match get("format") {
            None => {
                errors.push(FieldError::new("format", "required (csv, ofx, qfx or qbo)"));
                None
            }
            Some(f) => match f.parse::<ExportFormat>() {
                Ok(f) => Some(f),
                Err(e) => {
                    errors.push(FieldError::new("format", e.to_string()));
                    None
                }
            },
        };

        let mut timestamp = |key: &'static str| match get(key) {
            None => {
                errors.push(FieldError::new(key, "required (RFC 3339 timestamp)"));
                None
            }
            Some(v) => match Timestamp::parse_rfc3339(v) {
                Ok(t) => Some(t),
                Err(e) => {
                    errors.push(FieldError::new(key, e.to_string()));
                    None
                }
            },
        };
        let date_from = timestamp("from");
        let date_to = timestamp("to");
        if let (Some(from), Some(to)) = (date_from, date_to) {
            if from > to {
                errors.push(FieldError::new("date_range", "from must not be after to"));
            }
        }

        let fetch_size = match get("fetch_size") {
            None => Some(self.default_fetch_size),
            Some(v) => match v.parse::<u32>() {
                Ok(n) if (1..=MAX_FETCH_SIZE).contains(&n) => Some(n),
                _ => {
                    errors.push(FieldError::new("fetch_size", format!("must be an integer in 1..={MAX_FETCH_SIZE}")));
                    None
                }
            },
        };

        let max_rows = match get("max_rows") {
            None => Some(None),
            Some(v) => match v.parse::<u64>() {
                Ok(n) if n > 0 => Some(Some(n)),
                _ => {
                    errors.push(FieldError::new("max_rows", "must be a positive integer"));
                    None
                }
            },
        };

        let correlation_id = match get("correlation_id") {
            None => Some(new_correlation_id()),
            Some(c) if is_valid_correlation_id(c) => Some(c.to_owned()),
            Some(_) => {
                errors.push(FieldError::new("correlation_id", "must be 1-128 printable ASCII characters"));
                None
            }
        };

        match (account_id, format, date_from, date_to, fetch_size, max_rows, correlation_id) {
            (
                Some(account_id),
                Some(format),
                Some(date_from),
                Some(date_to),
                Some(fetch_size),
                Some(max_rows),
                Some(correlation_id),
            ) if errors.is_empty() => {
                Ok(ExportRequest { account_id, date_from, date_to, format, fetch_size, max_rows, correlation_id })
            }
            _ => Err(ValidationError { errors }),
        }
    }
}

/// Validates query parameters with the default fetch size of 500.
pub fn validate_request(raw: &HashMap<String, String>) -> Result<ExportRequest, ValidationError> {
    RequestValidator::default().validate(raw)
}
