#![allow(dead_code)]

use std::sync::Arc;
use std::time::Duration;

use ledgerstream_core::domain::{ExportFormat, ExportRequest};
use ledgerstream_core::pipeline::{run_export, EngineKind, VecSink};
use ledgerstream_core::rowsource::{Cursor, RowSource, TransactionStore};
use ledgerstream_server::bench::{dataset_request, export_target, wait_for_log};
use ledgerstream_server::service::{MemoryLogger, RequestLogRecord, ServerBuilder, ServerHandle, ServiceConfig};

pub struct TestServer {
    pub handle: ServerHandle,
    pub logger: Arc<MemoryLogger>,
}

impl TestServer {
    pub fn addr(&self) -> std::net::SocketAddr {
        self.handle.local_addr()
    }

    pub fn log(&self, correlation_id: &str) -> RequestLogRecord {
        wait_for_log(&self.logger, correlation_id, Duration::from_secs(30))
            .unwrap_or_else(|| panic!("no log line for {correlation_id}"))
    }
}

pub fn config(max_concurrent: usize) -> ServiceConfig {
    ServiceConfig {
        bind_address: "127.0.0.1:0".parse().unwrap(),
        max_concurrent_exports: max_concurrent,
        ..ServiceConfig::default()
    }
}

pub fn serve(store: &TransactionStore, config: ServiceConfig) -> TestServer {
    serve_with(store, config, EngineKind::Streaming, None)
}

pub type Wrap = Box<dyn Fn(Cursor, &ExportRequest) -> Box<dyn RowSource> + Send + Sync>;

pub fn serve_with(
    store: &TransactionStore,
    config: ServiceConfig,
    engine: EngineKind,
    wrap: Option<Wrap>,
) -> TestServer {
    let logger = Arc::new(MemoryLogger::new());
    let mut b = ServerBuilder::new(config).store(store.clone()).logger(logger.clone()).engine(engine);
    if let Some(w) = wrap {
        b = b.wrap_source(w);
    }
    TestServer { handle: b.start().expect("server starts"), logger }
}

/// Target for the whole generated dataset.
pub fn target(format: ExportFormat, fetch_size: u32) -> String {
    export_target(&dataset_request(format, fetch_size))
}

/// Bytes the buffered engine produces for the same request.
pub fn oracle(store: &TransactionStore, format: ExportFormat, fetch_size: u32) -> Vec<u8> {
    let mut sink = VecSink::new();
    run_export(EngineKind::Buffered, store, &dataset_request(format, fetch_size), &mut sink).unwrap();
    sink.into_bytes()
}
