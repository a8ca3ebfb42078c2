use std::io::Write;
use std::sync::Mutex;

use serde::Serialize;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "UPPERCASE")]
pub enum LogOutcome {
    Complete,
    Aborted,
    Rejected,
}

/// The single terminal record written for each export request.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct RequestLogRecord {
    pub correlation_id: String,
    /// As supplied by the client, even when it failed validation.
    pub account_id: Option<String>,
    pub format: Option<String>,
    pub rows_processed: u64,
    /// Body bytes handed to the socket.
    pub bytes_written: u64,
    pub outcome: LogOutcome,
    pub duration_ms: u64,
    /// Abort code for ABORTED; `validation` or `concurrency_limit` for REJECTED.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub abort_reason: Option<String>,
    pub status: u16,
    /// Rows processed before the first body byte reached the transport.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub first_byte_row: Option<u64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub peak_buffer_bytes: Option<usize>,
}

impl RequestLogRecord {
    pub fn to_json_line(&self) -> String {
        serde_json::to_string(self).expect("log record serializes")
    }
}

pub trait RequestLogger: Send + Sync {
    /// Must not fail or block for long; errors are swallowed.
    fn log(&self, record: &RequestLogRecord);
}

/// JSON lines on standard error.
#[derive(Debug, Default)]
pub struct StderrLogger;

impl RequestLogger for StderrLogger {
    fn log(&self, record: &RequestLogRecord) {
        let line = record.to_json_line();
        let _ = writeln!(std::io::stderr().lock(), "{line}");
    }
}

/// Keeps records in memory; used by tests and the loopback benchmark.
#[derive(Debug, Default)]
pub struct MemoryLogger {
    records: Mutex<Vec<RequestLogRecord>>,
}

impl MemoryLogger {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn records(&self) -> Vec<RequestLogRecord> {
        self.records.lock().unwrap().clone()
    }

    pub fn find(&self, correlation_id: &str) -> Option<RequestLogRecord> {
        self.records.lock().unwrap().iter().find(|r| r.correlation_id == correlation_id).cloned()
    }

    /// Rendered lines, as [`StderrLogger`] would print them.
    pub fn lines(&self) -> Vec<String> {
        self.records.lock().unwrap().iter().map(RequestLogRecord::to_json_line).collect()
    }
}

impl RequestLogger for MemoryLogger {
    fn log(&self, record: &RequestLogRecord) {
        self.records.lock().unwrap().push(record.clone());
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn json_line_shape() {
        let r = RequestLogRecord {
            correlation_id: "c1".into(),
            account_id: Some("A1".into()),
            format: Some("csv".into()),
            rows_processed: 50,
            bytes_written: 4096,
            outcome: LogOutcome::Aborted,
            duration_ms: 3,
            abort_reason: Some("cursor_error".into()),
            status: 200,
            first_byte_row: Some(0),
            peak_buffer_bytes: None,
        };
        let v: serde_json::Value = serde_json::from_str(&r.to_json_line()).unwrap();
        assert_eq!(v["outcome"], "ABORTED");
        assert_eq!(v["abort_reason"], "cursor_error");
        assert_eq!(v["rows_processed"], 50);
        assert!(v.get("peak_buffer_bytes").is_none());
        assert!(!r.to_json_line().contains('\n'));
    }
}
