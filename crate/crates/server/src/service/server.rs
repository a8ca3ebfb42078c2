use std::collections::HashMap;
use std::io;
use std::net::{SocketAddr, TcpListener, TcpStream};
use std::sync::atomic::{AtomicBool, AtomicUsize, Ordering};
use std::sync::Arc;
use std::thread::JoinHandle;
use std::time::{Duration, Instant};

use ledgerstream_core::domain::{
    is_valid_correlation_id, new_correlation_id, ExportRequest, RequestValidator, ValidationError,
};
use ledgerstream_core::pipeline::{run_request, EngineKind, InstrumentedSink, Outcome};
use ledgerstream_core::rowsource::{open_cursor, Cursor, RowSource, StoreError, TransactionStore};
use ledgerstream_core::serializers::media_type;
use serde_json::json;

use super::config::ServiceConfig;
use super::http::{read_head, render_head, write_full_response, HeadError, HttpChunkSink, RequestHead};
use super::log::{LogOutcome, RequestLogRecord, RequestLogger, StderrLogger};

const READ_TIMEOUT: Duration = Duration::from_secs(10);
const PROBLEM_JSON: &str = "application/problem+json";
pub const CORRELATION_HEADER: &str = "X-Correlation-Id";

/// Replaces the cursor of each export, e.g. to inject faults or gates.
pub type SourceWrapper = dyn Fn(Cursor, &ExportRequest) -> Box<dyn RowSource> + Send + Sync;

#[derive(Debug, thiserror::Error)]
pub enum ServiceError {
    #[error("no store configured")]
    NoStore,
    #[error(transparent)]
    Store(#[from] StoreError),
    #[error("cannot bind {addr}: {source}")]
    Bind { addr: SocketAddr, source: io::Error },
    #[error(transparent)]
    Config(#[from] super::config::ConfigError),
}

pub struct ServerBuilder {
    config: ServiceConfig,
    store: Option<TransactionStore>,
    logger: Arc<dyn RequestLogger>,
    engine: EngineKind,
    wrapper: Option<Arc<SourceWrapper>>,
}

impl ServerBuilder {
    pub fn new(config: ServiceConfig) -> Self {
        Self { config, store: None, logger: Arc::new(StderrLogger), engine: EngineKind::Streaming, wrapper: None }
    }

    /// Serves this store instead of opening `config.store_path`.
    pub fn store(mut self, store: TransactionStore) -> Self {
        self.store = Some(store);
        self
    }

    pub fn logger(mut self, logger: Arc<dyn RequestLogger>) -> Self {
        self.logger = logger;
        self
    }

    /// Engine used for exports. Streaming unless changed; the buffered engine
    /// exists for comparison runs.
    pub fn engine(mut self, engine: EngineKind) -> Self {
        self.engine = engine;
        self
    }

    pub fn wrap_source(
        mut self,
        wrapper: impl Fn(Cursor, &ExportRequest) -> Box<dyn RowSource> + Send + Sync + 'static,
    ) -> Self {
        self.wrapper = Some(Arc::new(wrapper));
        self
    }

    pub fn start(self) -> Result<ServerHandle, ServiceError> {
        self.config.validate()?;
        let store = match (self.store, &self.config.store_path) {
            (Some(s), _) => s,
            (None, Some(path)) => TransactionStore::open_file(path)?,
            (None, None) => return Err(ServiceError::NoStore),
        };
        let addr = self.config.bind_address;
        let listener = TcpListener::bind(addr).map_err(|source| ServiceError::Bind { addr, source })?;
        let local_addr = listener.local_addr().map_err(|source| ServiceError::Bind { addr, source })?;
        let shared = Arc::new(Shared {
            validator: RequestValidator { default_fetch_size: self.config.default_fetch_size },
            config: self.config,
            store,
            logger: self.logger,
            engine: self.engine,
            wrapper: self.wrapper,
            in_flight: AtomicUsize::new(0),
            stopping: AtomicBool::new(false),
        });
        let acceptor = {
            let shared = Arc::clone(&shared);
            std::thread::Builder::new()
                .name("ledgerstream-accept".into())
                .spawn(move || accept_loop(listener, shared))
                .expect("spawn acceptor")
        };
        Ok(ServerHandle { local_addr, shared, acceptor: Some(acceptor) })
    }
}

struct Shared {
    config: ServiceConfig,
    validator: RequestValidator,
    store: TransactionStore,
    logger: Arc<dyn RequestLogger>,
    engine: EngineKind,
    wrapper: Option<Arc<SourceWrapper>>,
    in_flight: AtomicUsize,
    stopping: AtomicBool,
}

/// Slot in the concurrency limit, released on drop.
struct Permit<'a>(&'a AtomicUsize);

impl Drop for Permit<'_> {
    fn drop(&mut self) {
        self.0.fetch_sub(1, Ordering::SeqCst);
    }
}

impl Shared {
    fn admit(&self) -> Option<Permit<'_>> {
        let max = self.config.max_concurrent_exports;
        self.in_flight
            .fetch_update(Ordering::SeqCst, Ordering::SeqCst, |n| (n < max).then_some(n + 1))
            .ok()
            .map(|_| Permit(&self.in_flight))
    }
}

/// Running server. Dropping the handle stops accepting connections.
pub struct ServerHandle {
    local_addr: SocketAddr,
    shared: Arc<Shared>,
    acceptor: Option<JoinHandle<()>>,
}

impl ServerHandle {
    pub fn local_addr(&self) -> SocketAddr {
        self.local_addr
    }

    pub fn open_exports(&self) -> usize {
        self.shared.in_flight.load(Ordering::SeqCst)
    }

    /// Blocks until the acceptor exits.
    pub fn join(mut self) {
        if let Some(t) = self.acceptor.take() {
            let _ = t.join();
        }
    }

    /// Stops accepting connections. Exports already running continue.
    pub fn shutdown(mut self) {
        self.stop();
    }

    fn stop(&mut self) {
        self.shared.stopping.store(true, Ordering::SeqCst);
        // Wake the blocking accept.
        let _ = TcpStream::connect_timeout(&self.local_addr, Duration::from_secs(1));
        if let Some(t) = self.acceptor.take() {
            let _ = t.join();
        }
    }
}

impl Drop for ServerHandle {
    fn drop(&mut self) {
        if self.acceptor.is_some() {
            self.stop();
        }
    }
}

fn accept_loop(listener: TcpListener, shared: Arc<Shared>) {
    for conn in listener.incoming() {
        if shared.stopping.load(Ordering::SeqCst) {
            break;
        }
        let Ok(stream) = conn else { continue };
        let shared = Arc::clone(&shared);
        let _ = std::thread::Builder::new()
            .name("ledgerstream-conn".into())
            .spawn(move || handle_connection(stream, &shared));
    }
}

fn problem(status: u16, title: &str, detail: serde_json::Value) -> Vec<u8> {
    let mut body = json!({ "type": "about:blank", "title": title, "status": status });
    if let (Some(obj), serde_json::Value::Object(extra)) = (body.as_object_mut(), detail) {
        obj.extend(extra);
    }
    serde_json::to_vec(&body).expect("problem document serializes")
}

fn handle_connection(mut stream: TcpStream, shared: &Shared) {
    let _ = stream.set_read_timeout(Some(READ_TIMEOUT));
    let _ = stream.set_nodelay(true);
    let head = match read_head(&mut stream) {
        Ok(h) => h,
        Err(HeadError::Eof) | Err(HeadError::Io(_)) => return,
        Err(e) => {
            let body = problem(400, "Malformed HTTP request", json!({ "detail": e.to_string() }));
            let _ = write_full_response(&mut stream, 400, PROBLEM_JSON, &[], &body);
            return;
        }
    };
    let segments: Vec<&str> = head.path().trim_start_matches('/').split('/').collect();
    let export_account = match segments.as_slice() {
        ["v1", "accounts", account, "transactions", "export"] => Some(account.to_string()),
        _ => None,
    };
    let known = export_account.is_some() || head.path() == "/healthz";
    if !known {
        let body = problem(404, "Not Found", json!({ "detail": format!("no route for {}", head.path()) }));
        let _ = write_full_response(&mut stream, 404, PROBLEM_JSON, &[], &body);
        return;
    }
    if head.method != "GET" {
        let body = problem(405, "Method Not Allowed", json!({ "detail": "only GET is supported" }));
        let _ = write_full_response(&mut stream, 405, PROBLEM_JSON, &[("Allow", "GET".into())], &body);
        return;
    }
    match export_account {
        Some(account) => handle_export(stream, &head, account, shared),
        None => handle_health(stream, shared),
    }
}

fn handle_health(mut stream: TcpStream, shared: &Shared) {
    let body = json!({
        "status": "ok",
        "open_exports": shared.in_flight.load(Ordering::SeqCst),
        "store_rows": shared.store.row_count(),
    });
    let _ = write_full_response(&mut stream, 200, "application/json", &[], body.to_string().as_bytes());
}

/// Query parameters plus the path account and correlation header, in the
/// shape the request validator expects. The first occurrence of a repeated
/// key wins.
fn raw_params(head: &RequestHead, account: String) -> HashMap<String, String> {
    let mut raw: HashMap<String, String> = HashMap::new();
    for (k, v) in url::form_urlencoded::parse(head.query().as_bytes()) {
        raw.entry(k.into_owned()).or_insert_with(|| v.into_owned());
    }
    raw.insert("account_id".into(), account);
    raw.remove("correlation_id");
    if let Some(id) = head.header(CORRELATION_HEADER) {
        raw.insert("correlation_id".into(), id.to_owned());
    }
    raw
}

pub fn content_disposition(req: &ExportRequest) -> String {
    format!(
        "attachment; filename=\"export_{}_{}_{}.{}\"",
        req.account_id,
        req.date_from.to_date(),
        req.date_to.to_date(),
        req.format.extension()
    )
}

fn handle_export(mut stream: TcpStream, head: &RequestHead, account: String, shared: &Shared) {
    let started = Instant::now();
    let raw = raw_params(head, account);
    let mut log = RequestLogRecord {
        correlation_id: String::new(),
        account_id: raw.get("account_id").cloned(),
        format: raw.get("format").cloned(),
        rows_processed: 0,
        bytes_written: 0,
        outcome: LogOutcome::Rejected,
        duration_ms: 0,
        abort_reason: None,
        status: 400,
        first_byte_row: None,
        peak_buffer_bytes: None,
    };
    let finish_log = |mut log: RequestLogRecord| {
        log.duration_ms = started.elapsed().as_millis() as u64;
        shared.logger.log(&log);
    };

    let req = match shared.validator.validate(&raw) {
        Ok(req) => req,
        Err(err) => {
            log.correlation_id = raw
                .get("correlation_id")
                .filter(|c| is_valid_correlation_id(c))
                .cloned()
                .unwrap_or_else(new_correlation_id);
            log.abort_reason = Some("validation".into());
            let _ = write_full_response(
                &mut stream,
                400,
                PROBLEM_JSON,
                &[(CORRELATION_HEADER, log.correlation_id.clone())],
                &validation_problem(&err, &log.correlation_id),
            );
            finish_log(log);
            return;
        }
    };
    log.correlation_id = req.correlation_id.clone();
    log.format = Some(req.format.as_str().to_owned());
    let corr_header = (CORRELATION_HEADER, req.correlation_id.clone());

    let Some(_permit) = shared.admit() else {
        log.status = 429;
        log.abort_reason = Some("concurrency_limit".into());
        let body = problem(
            429,
            "Too many concurrent exports",
            json!({ "detail": format!("at most {} exports may run at once", shared.config.max_concurrent_exports),
                    "correlation_id": req.correlation_id }),
        );
        let _ = write_full_response(&mut stream, 429, PROBLEM_JSON, &[("Retry-After", "1".into()), corr_header], &body);
        finish_log(log);
        return;
    };

    let cursor = match open_cursor(&shared.store, &req) {
        Ok(c) => c,
        Err(e) => {
            log.status = 500;
            log.outcome = LogOutcome::Aborted;
            log.abort_reason = Some("store_error".into());
            let body = problem(500, "Store unavailable", json!({ "detail": e.to_string() }));
            let _ = write_full_response(&mut stream, 500, PROBLEM_JSON, &[corr_header], &body);
            finish_log(log);
            return;
        }
    };
    let source: Box<dyn RowSource> = match &shared.wrapper {
        Some(wrap) => wrap(cursor, &req),
        None => Box::new(cursor),
    };

    let response_head = render_head(
        200,
        &[
            ("Content-Type", media_type(req.format).to_owned()),
            ("Content-Disposition", content_disposition(&req)),
            corr_header,
            ("Transfer-Encoding", "chunked".into()),
            ("Cache-Control", "no-store".into()),
            ("Connection", "close".into()),
        ],
    );
    let error_body = problem(500, "Export failed", json!({ "correlation_id": req.correlation_id }));
    let http = match stream.try_clone().and_then(|s| {
        HttpChunkSink::new(
            s,
            response_head,
            error_body,
            shared.config.write_timeout(),
            shared.config.max_export_duration(),
        )
    }) {
        Ok(h) => h,
        Err(_) => {
            log.outcome = LogOutcome::Aborted;
            log.abort_reason = Some("sink_error".into());
            finish_log(log);
            return;
        }
    };
    let mut sink = InstrumentedSink::new(http).without_event_log();
    let report = run_request(shared.engine, source, &req, &mut sink);

    log.rows_processed = report.rows_processed;
    log.peak_buffer_bytes = Some(report.peak_buffer_bytes);
    log.first_byte_row = sink.first_byte_at_row();
    let http = sink.into_inner();
    log.bytes_written = http.body_bytes_sent();
    log.status = http.status_sent().unwrap_or(500);
    match report.outcome {
        Outcome::Complete => log.outcome = LogOutcome::Complete,
        Outcome::Aborted => {
            log.outcome = LogOutcome::Aborted;
            log.abort_reason = report.abort_reason.map(|r| r.code().to_owned());
        }
    }
    finish_log(log);
}

fn validation_problem(err: &ValidationError, correlation_id: &str) -> Vec<u8> {
    let params: Vec<_> = err.errors.iter().map(|e| json!({ "name": e.field, "reason": e.message })).collect();
    problem(400, "Invalid export request", json!({ "invalid_params": params, "correlation_id": correlation_id }))
}
