//! Benchmark harness comparing the buffered and streaming engines across
//! dataset sizes and formats.
//!
//! Logical metrics (rows before the first byte, engine peak buffer, output
//! bytes) are deterministic and must agree across repetitions. Wall-clock
//! figures are informational.

mod report;

use std::path::{Path, PathBuf};
use std::str::FromStr;
use std::sync::Arc;
use std::time::{Duration, Instant};

use ledgerstream_core::domain::{ExportFormat, ExportRequest, Timestamp, DEFAULT_FETCH_SIZE, MAX_FETCH_SIZE};
use ledgerstream_core::pipeline::{run_export, DiscardSink, EngineKind, InstrumentedSink, Outcome};
use ledgerstream_core::rowsource::{
    generate, GeneratorSpec, StoreError, TransactionStore, DEFAULT_ACCOUNT, DEFAULT_FROM, DEFAULT_TO,
};
use serde::Serialize;

use crate::client::{self, ClientOptions};
use crate::service::{LogOutcome, MemoryLogger, RequestLogRecord, ServerBuilder, ServiceConfig, CORRELATION_HEADER};

pub use report::{render_report, ReportMode};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum Transport {
    InProcess,
    HttpLoopback,
}

impl FromStr for Transport {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        match s.to_ascii_lowercase().replace('_', "-").as_str() {
            "in-process" => Ok(Transport::InProcess),
            "http-loopback" | "http" => Ok(Transport::HttpLoopback),
            _ => Err(format!("unknown transport {s:?} (expected in-process or http-loopback)")),
        }
    }
}

pub fn parse_engine(s: &str) -> Result<EngineKind, String> {
    match s.to_ascii_lowercase().as_str() {
        "buffered" => Ok(EngineKind::Buffered),
        "streaming" => Ok(EngineKind::Streaming),
        _ => Err(format!("unknown engine {s:?} (expected buffered or streaming)")),
    }
}

#[derive(Debug, Clone)]
pub struct BenchSpec {
    pub sizes: Vec<u64>,
    pub formats: Vec<ExportFormat>,
    pub engines: Vec<EngineKind>,
    pub fetch_size: u32,
    pub seed: u64,
    pub repetitions: u32,
    pub transport: Transport,
    /// Simultaneous exports per cell.
    pub concurrent: usize,
    /// Where file-backed datasets are cached. `None` keeps datasets in memory.
    pub cache_dir: Option<PathBuf>,
    /// Loopback only: client read rate in bytes per second.
    pub client_rate: Option<u64>,
}

impl Default for BenchSpec {
    fn default() -> Self {
        Self {
            sizes: vec![100_000, 1_000_000],
            formats: ExportFormat::ALL.to_vec(),
            engines: vec![EngineKind::Buffered, EngineKind::Streaming],
            fetch_size: DEFAULT_FETCH_SIZE,
            seed: 42,
            repetitions: 3,
            transport: Transport::InProcess,
            concurrent: 1,
            cache_dir: None,
            client_rate: None,
        }
    }
}

#[derive(Debug, thiserror::Error)]
pub enum BenchError {
    #[error("invalid benchmark spec: {0}")]
    Spec(String),
    #[error(transparent)]
    Store(#[from] StoreError),
    #[error("cannot create cache directory {path}: {source}")]
    Cache { path: PathBuf, source: std::io::Error },
}

impl BenchSpec {
    pub fn validate(&self) -> Result<(), BenchError> {
        let fail = |m: &str| Err(BenchError::Spec(m.to_owned()));
        if self.sizes.is_empty() {
            return fail("sizes must not be empty");
        }
        if self.formats.is_empty() {
            return fail("formats must not be empty");
        }
        if self.engines.is_empty() {
            return fail("engines must not be empty");
        }
        if self.repetitions == 0 {
            return fail("repetitions must be at least 1");
        }
        if self.concurrent == 0 {
            return fail("concurrent must be at least 1");
        }
        if !(1..=MAX_FETCH_SIZE).contains(&self.fetch_size) {
            return fail(&format!("fetch_size must be in 1..={MAX_FETCH_SIZE}"));
        }
        if self.client_rate == Some(0) {
            return fail("client rate must be positive");
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "UPPERCASE")]
pub enum CellStatus {
    Ok,
    Failed,
}

/// One repetition of one cell.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Sample {
    pub rows: u64,
    pub bytes: u64,
    pub ttfb_logical_rows: Option<u64>,
    pub ttfb_wallclock_ms: Option<f64>,
    pub total_ms: f64,
    /// Largest engine peak among the simultaneous exports.
    pub peak_buffer_bytes: usize,
    /// Sum of the engine peaks of the simultaneous exports.
    pub aggregate_peak_buffer_bytes: usize,
}

impl Sample {
    fn logical(&self) -> (u64, u64, Option<u64>, usize, usize) {
        (self.rows, self.bytes, self.ttfb_logical_rows, self.peak_buffer_bytes, self.aggregate_peak_buffer_bytes)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BenchCell {
    pub size: u64,
    pub format: ExportFormat,
    pub engine: EngineKind,
    pub status: CellStatus,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
    pub rows: u64,
    pub bytes: u64,
    pub ttfb_logical_rows: Option<u64>,
    /// Median over repetitions.
    pub ttfb_wallclock_ms: Option<f64>,
    /// Median over repetitions.
    pub total_ms: f64,
    pub peak_buffer_bytes: usize,
    pub aggregate_peak_buffer_bytes: usize,
    pub throughput_rows_per_s: f64,
    pub samples: Vec<Sample>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BenchReport {
    pub seed: u64,
    pub fetch_size: u32,
    pub repetitions: u32,
    pub transport: Transport,
    pub concurrent: usize,
    pub cells: Vec<BenchCell>,
}

impl BenchReport {
    pub fn empty(spec: &BenchSpec) -> Self {
        Self {
            seed: spec.seed,
            fetch_size: spec.fetch_size,
            repetitions: spec.repetitions,
            transport: spec.transport,
            concurrent: spec.concurrent,
            cells: Vec::new(),
        }
    }

    pub fn any_failed(&self) -> bool {
        self.cells.iter().any(|c| c.status == CellStatus::Failed)
    }

    pub fn cell(&self, size: u64, format: ExportFormat, engine: EngineKind) -> Option<&BenchCell> {
        self.cells.iter().find(|c| c.size == size && c.format == format && c.engine == engine)
    }
}

/// Request covering the whole generated dataset.
pub fn dataset_request(format: ExportFormat, fetch_size: u32) -> ExportRequest {
    ExportRequest::new(
        DEFAULT_ACCOUNT,
        Timestamp::from_epoch(DEFAULT_FROM).unwrap(),
        Timestamp::from_epoch(DEFAULT_TO).unwrap(),
        format,
    )
    .expect("default dataset request is valid")
    .with_fetch_size(fetch_size)
    .with_correlation_id("bench")
}

/// Path and query for `req` on the export endpoint.
pub fn export_target(req: &ExportRequest) -> String {
    let query: String = url::form_urlencoded::Serializer::new(String::new())
        .append_pair("format", req.format.as_str())
        .append_pair("from", &req.date_from.to_iso8601())
        .append_pair("to", &req.date_to.to_iso8601())
        .append_pair("fetch_size", &req.fetch_size.to_string())
        .finish();
    format!("/v1/accounts/{}/transactions/export?{query}", req.account_id)
}

/// Cached file name for a generated dataset.
pub fn dataset_file(cache_dir: &Path, seed: u64, rows: u64) -> PathBuf {
    cache_dir.join(format!("txs1-seed{seed}-rows{rows}.bin"))
}

/// Returns the seeded dataset, from the cache when present.
pub fn load_dataset(seed: u64, rows: u64, cache_dir: Option<&Path>) -> Result<TransactionStore, BenchError> {
    let Some(dir) = cache_dir else {
        return Ok(generate(&GeneratorSpec::new(seed, rows)));
    };
    std::fs::create_dir_all(dir).map_err(|source| BenchError::Cache { path: dir.to_owned(), source })?;
    let path = dataset_file(dir, seed, rows);
    if let Ok(store) = TransactionStore::open_file(&path) {
        if store.row_count() == rows {
            return Ok(store);
        }
    }
    generate(&GeneratorSpec::new(seed, rows)).write_file(&path)?;
    Ok(TransactionStore::open_file(&path)?)
}

fn ms(d: Duration) -> f64 {
    (d.as_secs_f64() * 1e6).round() / 1e3
}

fn median(mut xs: Vec<f64>) -> f64 {
    xs.sort_by(f64::total_cmp);
    let n = xs.len();
    match n {
        0 => 0.0,
        _ if n % 2 == 1 => xs[n / 2],
        _ => ((xs[n / 2 - 1] + xs[n / 2]) / 2.0 * 1e3).round() / 1e3,
    }
}

/// Metrics of a single export.
struct Single {
    rows: u64,
    bytes: u64,
    ttfb_rows: Option<u64>,
    ttfb: Option<Duration>,
    total: Duration,
    peak: usize,
}

fn in_process(store: &TransactionStore, req: &ExportRequest, engine: EngineKind) -> Result<Single, String> {
    let started = Instant::now();
    let mut sink = InstrumentedSink::new(DiscardSink::default()).without_event_log();
    sink.start_clock();
    let report = run_export(engine, store, req, &mut sink).map_err(|e| e.to_string())?;
    let total = started.elapsed();
    if report.outcome != Outcome::Complete {
        let why = report.abort_reason.map_or("unknown", |r| r.code());
        return Err(format!("export aborted: {why}"));
    }
    Ok(Single {
        rows: report.rows_processed,
        bytes: sink.total_bytes(),
        ttfb_rows: sink.first_byte_at_row(),
        ttfb: sink.first_byte_after(),
        total,
        peak: report.peak_buffer_bytes,
    })
}

/// Waits for the terminal log line, which lands just after the response.
pub fn wait_for_log(logger: &MemoryLogger, correlation_id: &str, timeout: Duration) -> Option<RequestLogRecord> {
    let deadline = Instant::now() + timeout;
    loop {
        if let Some(r) = logger.find(correlation_id) {
            return Some(r);
        }
        if Instant::now() > deadline {
            return None;
        }
        std::thread::sleep(Duration::from_millis(2));
    }
}

struct Loopback {
    addr: std::net::SocketAddr,
    logger: Arc<MemoryLogger>,
    client: ClientOptions,
}

impl Loopback {
    fn export(&self, req: &ExportRequest, correlation_id: &str) -> Result<Single, String> {
        let opts = self.client.clone().header(CORRELATION_HEADER, correlation_id);
        let resp = client::get(self.addr, &export_target(req), &opts).map_err(|e| e.to_string())?;
        if resp.status != 200 {
            return Err(format!("HTTP {}", resp.status));
        }
        if !resp.complete {
            return Err("response body was truncated".into());
        }
        let rec = wait_for_log(&self.logger, correlation_id, Duration::from_secs(10))
            .ok_or_else(|| format!("no log line for {correlation_id}"))?;
        if rec.outcome != LogOutcome::Complete {
            return Err(format!("export aborted: {}", rec.abort_reason.unwrap_or_default()));
        }
        Ok(Single {
            rows: rec.rows_processed,
            bytes: resp.body.len() as u64,
            ttfb_rows: rec.first_byte_row,
            ttfb: resp.first_body_byte_after,
            total: resp.elapsed,
            peak: rec.peak_buffer_bytes.unwrap_or(0),
        })
    }
}

/// Runs `k` exports at once and folds them into one sample.
fn concurrent_sample(k: usize, run: impl Fn(usize) -> Result<Single, String> + Sync) -> Result<Sample, String> {
    let singles: Vec<Result<Single, String>> = if k == 1 {
        vec![run(0)]
    } else {
        std::thread::scope(|s| {
            let handles: Vec<_> = (0..k)
                .map(|i| {
                    let run = &run;
                    s.spawn(move || run(i))
                })
                .collect();
            handles.into_iter().map(|h| h.join().unwrap_or_else(|_| Err("export thread panicked".into()))).collect()
        })
    };
    let singles: Vec<Single> = singles.into_iter().collect::<Result<_, _>>()?;
    let first = &singles[0];
    if singles.iter().any(|s| (s.rows, s.bytes, s.ttfb_rows) != (first.rows, first.bytes, first.ttfb_rows)) {
        return Err("simultaneous exports disagree on output".into());
    }
    let slowest = singles.iter().max_by_key(|s| s.total).unwrap();
    Ok(Sample {
        rows: first.rows,
        bytes: first.bytes,
        ttfb_logical_rows: first.ttfb_rows,
        ttfb_wallclock_ms: singles.iter().filter_map(|s| s.ttfb).max().map(ms),
        total_ms: ms(slowest.total),
        peak_buffer_bytes: singles.iter().map(|s| s.peak).max().unwrap_or(0),
        aggregate_peak_buffer_bytes: singles.iter().map(|s| s.peak).sum(),
    })
}

fn summarize(
    size: u64,
    format: ExportFormat,
    engine: EngineKind,
    samples: Vec<Sample>,
    error: Option<String>,
) -> BenchCell {
    let mut error = error;
    if error.is_none() && samples.windows(2).any(|w| w[0].logical() != w[1].logical()) {
        error = Some("logical metrics differ across repetitions".into());
    }
    let base = samples.first();
    let total_ms = median(samples.iter().map(|s| s.total_ms).collect());
    let ttfbs: Vec<f64> = samples.iter().filter_map(|s| s.ttfb_wallclock_ms).collect();
    let rows = base.map_or(0, |s| s.rows);
    BenchCell {
        size,
        format,
        engine,
        status: if error.is_some() { CellStatus::Failed } else { CellStatus::Ok },
        error,
        rows,
        bytes: base.map_or(0, |s| s.bytes),
        ttfb_logical_rows: base.and_then(|s| s.ttfb_logical_rows),
        ttfb_wallclock_ms: (!ttfbs.is_empty()).then(|| median(ttfbs)),
        total_ms,
        peak_buffer_bytes: base.map_or(0, |s| s.peak_buffer_bytes),
        aggregate_peak_buffer_bytes: base.map_or(0, |s| s.aggregate_peak_buffer_bytes),
        throughput_rows_per_s: (rows as f64 * 1000.0 / total_ms.max(0.001)).round(),
        samples,
    }
}

/// Runs every (size, format, engine) cell in order. Cell failures are
/// recorded in the report; only dataset or spec problems return an error.
pub fn run_bench(spec: &BenchSpec) -> Result<BenchReport, BenchError> {
    spec.validate()?;
    let mut report = BenchReport::empty(spec);
    for &size in &spec.sizes {
        let store = load_dataset(spec.seed, size, spec.cache_dir.as_deref())?;
        for &format in &spec.formats {
            let req = dataset_request(format, spec.fetch_size);
            for &engine in &spec.engines {
                report.cells.push(run_cell(spec, &store, &req, size, engine));
            }
        }
    }
    Ok(report)
}

fn run_cell(
    spec: &BenchSpec,
    store: &TransactionStore,
    req: &ExportRequest,
    size: u64,
    engine: EngineKind,
) -> BenchCell {
    let format = req.format;
    let mut samples = Vec::new();
    let mut error = None;
    match spec.transport {
        Transport::InProcess => {
            for _ in 0..spec.repetitions {
                match concurrent_sample(spec.concurrent, |_| in_process(store, req, engine)) {
                    Ok(s) => samples.push(s),
                    Err(e) => {
                        error = Some(e);
                        break;
                    }
                }
            }
        }
        Transport::HttpLoopback => {
            let logger = Arc::new(MemoryLogger::new());
            let config = ServiceConfig {
                bind_address: "127.0.0.1:0".parse().unwrap(),
                max_concurrent_exports: spec.concurrent,
                ..ServiceConfig::default()
            };
            let server = ServerBuilder::new(config).store(store.clone()).logger(logger.clone()).engine(engine).start();
            let server = match server {
                Ok(s) => s,
                Err(e) => return summarize(size, format, engine, samples, Some(e.to_string())),
            };
            let mut client = ClientOptions::default();
            if let Some(rate) = spec.client_rate {
                client = client.throttled(4096, rate);
            }
            let lb = Loopback { addr: server.local_addr(), logger, client };
            for rep in 0..spec.repetitions {
                let run = |i: usize| lb.export(req, &format!("bench-{size}-{format}-{engine}-{rep}-{i}"));
                match concurrent_sample(spec.concurrent, run) {
                    Ok(s) => samples.push(s),
                    Err(e) => {
                        error = Some(e);
                        break;
                    }
                }
            }
        }
    }
    summarize(size, format, engine, samples, error)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn medians() {
        assert_eq!(median(vec![3.0, 1.0, 2.0]), 2.0);
        assert_eq!(median(vec![4.0, 1.0, 2.0, 3.0]), 2.5);
        assert_eq!(median(vec![]), 0.0);
    }

    #[test]
    fn spec_validation() {
        assert!(BenchSpec::default().validate().is_ok());
        for bad in [
            BenchSpec { sizes: vec![], ..Default::default() },
            BenchSpec { repetitions: 0, ..Default::default() },
            BenchSpec { concurrent: 0, ..Default::default() },
            BenchSpec { fetch_size: 0, ..Default::default() },
            BenchSpec { formats: vec![], ..Default::default() },
        ] {
            assert!(bad.validate().is_err());
        }
    }

    #[test]
    fn transport_names() {
        assert_eq!("in-process".parse::<Transport>().unwrap(), Transport::InProcess);
        assert_eq!("HTTP_LOOPBACK".parse::<Transport>().unwrap(), Transport::HttpLoopback);
        assert!("carrier-pigeon".parse::<Transport>().is_err());
    }

    #[test]
    fn repetition_drift_fails_the_cell() {
        let s = |peak| Sample {
            rows: 10,
            bytes: 100,
            ttfb_logical_rows: Some(0),
            ttfb_wallclock_ms: Some(0.1),
            total_ms: 1.0,
            peak_buffer_bytes: peak,
            aggregate_peak_buffer_bytes: peak,
        };
        let ok = summarize(10, ExportFormat::Csv, EngineKind::Streaming, vec![s(5), s(5)], None);
        assert_eq!(ok.status, CellStatus::Ok);
        let drift = summarize(10, ExportFormat::Csv, EngineKind::Streaming, vec![s(5), s(6)], None);
        assert_eq!(drift.status, CellStatus::Failed);
    }
}
