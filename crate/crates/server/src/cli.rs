//! Command line: `gen`, `serve`, `bench`, `verify` and `export`.
//!
//! Exit codes: 0 success, 1 failure (including any failed benchmark cell),
//! 2 and 3 for a TRUNCATED or MALFORMED verify result, 64 for usage errors.

use std::ffi::OsString;
use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use ledgerstream_core::domain::{ExportFormat, ExportRequest, Timestamp, DEFAULT_FETCH_SIZE};
use ledgerstream_core::pipeline::{run_export, AbortReason, ChunkSink, EngineKind, Outcome, SinkError};
use ledgerstream_core::rowsource::{
    generate, GeneratorSpec, TransactionStore, DEFAULT_ACCOUNT, DEFAULT_FROM, DEFAULT_TO,
};
use ledgerstream_core::verify::{verify, VerifyStatus};
use serde_json::json;

use crate::bench::{parse_engine, render_report, run_bench, BenchSpec, ReportMode, Transport};
use crate::service::{ConfigFile, ServerBuilder};

pub const EXIT_OK: i32 = 0;
pub const EXIT_FAILURE: i32 = 1;
pub const EXIT_TRUNCATED: i32 = 2;
pub const EXIT_MALFORMED: i32 = 3;
pub const EXIT_USAGE: i32 = 64;

#[derive(Debug, Parser)]
#[command(name = "ledgerstream", version, about = "Streaming transaction export service and tools")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Generate a seeded synthetic dataset as a binary row file.
    Gen(GenArgs),
    /// Run the HTTP export service.
    Serve(ServeArgs),
    /// Compare the buffered and streaming engines and write a report.
    Bench(BenchArgs),
    /// Check an exported file for completeness and integrity.
    Verify(VerifyArgs),
    /// Export to a local file without HTTP.
    Export(ExportArgs),
}

#[derive(Debug, Args)]
struct GenArgs {
    /// Generator seed.
    #[arg(long, default_value_t = 42)]
    seed: u64,
    /// Number of rows to generate.
    #[arg(long)]
    rows: u64,
    /// Output path for the row file.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Debug, Args)]
struct ServeArgs {
    /// TOML config file; flags override its keys.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Listen address, host:port.
    #[arg(long)]
    bind: Option<String>,
    /// Row file to serve (see `gen`).
    #[arg(long)]
    store: Option<PathBuf>,
    /// Most exports allowed to run at once; more get 429.
    #[arg(long = "max-concurrent")]
    max_concurrent: Option<usize>,
    /// Seconds a single socket write may stall before the export aborts.
    #[arg(long = "write-timeout")]
    write_timeout: Option<u64>,
    /// Seconds an export may run in total.
    #[arg(long = "max-duration")]
    max_duration: Option<u64>,
    /// Fetch size for requests that do not give one.
    #[arg(long = "fetch-size")]
    fetch_size: Option<u32>,
}

#[derive(Debug, Args)]
struct BenchArgs {
    /// Dataset sizes in rows, comma separated.
    #[arg(long, value_delimiter = ',', default_values_t = [100_000u64, 1_000_000])]
    sizes: Vec<u64>,
    /// Formats, comma separated.
    #[arg(long, value_delimiter = ',', default_values_t = ExportFormat::ALL)]
    formats: Vec<ExportFormat>,
    /// Engines (buffered, streaming), comma separated.
    #[arg(long, value_delimiter = ',', value_parser = parse_engine, default_values = ["buffered", "streaming"])]
    engines: Vec<EngineKind>,
    /// Rows per cursor batch.
    #[arg(long = "fetch-size", default_value_t = DEFAULT_FETCH_SIZE)]
    fetch_size: u32,
    /// Dataset seed.
    #[arg(long, default_value_t = 42)]
    seed: u64,
    /// Runs per cell; wall-clock figures are medians.
    #[arg(long, default_value_t = 3)]
    repetitions: u32,
    /// in-process or http-loopback.
    #[arg(long, default_value = "in-process")]
    transport: Transport,
    /// Simultaneous exports per cell.
    #[arg(long, default_value_t = 1)]
    concurrent: usize,
    /// http-loopback only: client read rate in bytes per second.
    #[arg(long = "client-rate")]
    client_rate: Option<u64>,
    /// Directory for cached datasets. Defaults to a directory under the
    /// system temp dir.
    #[arg(long = "cache-dir", conflicts_with = "in_memory")]
    cache_dir: Option<PathBuf>,
    /// Keep datasets in memory instead of file-backed stores.
    #[arg(long = "in-memory")]
    in_memory: bool,
    /// Report file; .json and .csv select those formats, anything else is a
    /// text table. Without it the table goes to standard output.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Report format, overriding the --out extension (table, csv, json).
    #[arg(long)]
    mode: Option<ReportMode>,
}

#[derive(Debug, Args)]
struct VerifyArgs {
    /// Format the file claims to be.
    #[arg(long)]
    format: ExportFormat,
    /// File to check.
    path: PathBuf,
}

#[derive(Debug, Args)]
struct ExportArgs {
    /// Output format.
    #[arg(long)]
    format: ExportFormat,
    /// Output file.
    #[arg(long)]
    out: PathBuf,
    /// Row file to export from.
    #[arg(long, conflicts_with_all = ["rows", "seed"], required_unless_present = "rows")]
    store: Option<PathBuf>,
    /// Generate this many rows in memory instead of reading a row file.
    #[arg(long)]
    rows: Option<u64>,
    /// Seed for generated rows.
    #[arg(long, default_value_t = 42)]
    seed: u64,
    /// Account to export.
    #[arg(long, default_value = DEFAULT_ACCOUNT)]
    account: String,
    /// Inclusive start, RFC 3339. Defaults to the generated dataset's start.
    #[arg(long, value_parser = parse_timestamp)]
    from: Option<Timestamp>,
    /// Inclusive end, RFC 3339. Defaults to the generated dataset's end.
    #[arg(long, value_parser = parse_timestamp)]
    to: Option<Timestamp>,
    /// Rows per cursor batch.
    #[arg(long = "fetch-size", default_value_t = DEFAULT_FETCH_SIZE)]
    fetch_size: u32,
    /// Stop after this many rows.
    #[arg(long = "max-rows")]
    max_rows: Option<u64>,
    /// buffered or streaming.
    #[arg(long, value_parser = parse_engine, default_value = "streaming")]
    engine: EngineKind,
}

fn parse_timestamp(s: &str) -> Result<Timestamp, String> {
    Timestamp::parse_rfc3339(s).map_err(|e| e.to_string())
}

/// Parses `argv` (including the program name) and runs the command.
pub fn run(argv: impl IntoIterator<Item = OsString>) -> i32 {
    let cli = match Cli::try_parse_from(argv) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { EXIT_USAGE } else { EXIT_OK };
        }
    };
    let result = match cli.command {
        Command::Gen(a) => cmd_gen(a),
        Command::Serve(a) => cmd_serve(a),
        Command::Bench(a) => cmd_bench(a),
        Command::Verify(a) => cmd_verify(a),
        Command::Export(a) => cmd_export(a),
    };
    match result {
        Ok(code) => code,
        Err(msg) => {
            eprintln!("error: {msg}");
            EXIT_FAILURE
        }
    }
}

type CmdResult = Result<i32, String>;

fn cmd_gen(a: GenArgs) -> CmdResult {
    let store = generate(&GeneratorSpec::new(a.seed, a.rows));
    let digest = store.digest().map_err(|e| e.to_string())?;
    store.write_file(&a.out).map_err(|e| e.to_string())?;
    println!("{}", json!({ "rows": a.rows, "seed": a.seed, "out": a.out, "digest": digest }));
    Ok(EXIT_OK)
}

fn cmd_serve(a: ServeArgs) -> CmdResult {
    let base = match &a.config {
        Some(p) => ConfigFile::load(p).map_err(|e| e.to_string())?,
        None => ConfigFile::default(),
    };
    let flags = ConfigFile {
        bind_address: a.bind,
        max_concurrent_exports: a.max_concurrent,
        write_timeout_seconds: a.write_timeout,
        max_export_duration_seconds: a.max_duration,
        default_fetch_size: a.fetch_size,
        store_path: a.store,
    };
    let config = base.merge(flags).resolve().map_err(|e| e.to_string())?;
    let server = ServerBuilder::new(config).start().map_err(|e| e.to_string())?;
    eprintln!("listening on http://{}", server.local_addr());
    server.join();
    Ok(EXIT_OK)
}

fn cmd_bench(a: BenchArgs) -> CmdResult {
    let cache_dir = if a.in_memory {
        None
    } else {
        Some(a.cache_dir.unwrap_or_else(|| std::env::temp_dir().join("ledgerstream-bench")))
    };
    let spec = BenchSpec {
        sizes: a.sizes,
        formats: a.formats,
        engines: a.engines,
        fetch_size: a.fetch_size,
        seed: a.seed,
        repetitions: a.repetitions,
        transport: a.transport,
        concurrent: a.concurrent,
        cache_dir,
        client_rate: a.client_rate,
    };
    let report = run_bench(&spec).map_err(|e| e.to_string())?;
    let mode = a.mode.unwrap_or_else(|| a.out.as_deref().map_or(ReportMode::Table, ReportMode::for_path));
    let bytes = render_report(&report, mode);
    match &a.out {
        Some(path) => std::fs::write(path, &bytes).map_err(|e| format!("cannot write {}: {e}", path.display()))?,
        None => std::io::stdout().write_all(&bytes).map_err(|e| e.to_string())?,
    }
    Ok(if report.any_failed() { EXIT_FAILURE } else { EXIT_OK })
}

fn cmd_verify(a: VerifyArgs) -> CmdResult {
    let data = std::fs::read(&a.path).map_err(|e| format!("cannot read {}: {e}", a.path.display()))?;
    let result = verify(&data, a.format);
    println!("{}", serde_json::to_string(&result).expect("verify result serializes"));
    Ok(match result.status {
        VerifyStatus::Complete => EXIT_OK,
        VerifyStatus::Truncated => EXIT_TRUNCATED,
        VerifyStatus::Malformed => EXIT_MALFORMED,
    })
}

/// Writes export bytes straight to a file.
struct FileSink {
    out: BufWriter<File>,
}

impl ChunkSink for FileSink {
    fn write(&mut self, bytes: &[u8]) -> Result<(), SinkError> {
        self.out.write_all(bytes).map_err(|e| SinkError::Io(e.to_string()))
    }

    fn finish(&mut self) -> Result<(), SinkError> {
        self.out.flush().map_err(|e| SinkError::Io(e.to_string()))
    }

    // The partial file is kept; `verify` reports it as truncated.
    fn abort(&mut self, _reason: &AbortReason) {
        let _ = self.out.flush();
    }
}

fn open_output(path: &Path) -> Result<FileSink, String> {
    let file = File::create(path).map_err(|e| format!("cannot create {}: {e}", path.display()))?;
    Ok(FileSink { out: BufWriter::with_capacity(64 * 1024, file) })
}

fn cmd_export(a: ExportArgs) -> CmdResult {
    let store = match (&a.store, a.rows) {
        (Some(p), _) => TransactionStore::open_file(p).map_err(|e| e.to_string())?,
        (None, Some(rows)) => generate(&GeneratorSpec::new(a.seed, rows)),
        (None, None) => unreachable!("clap requires --store or --rows"),
    };
    let from = a.from.unwrap_or_else(|| Timestamp::from_epoch(DEFAULT_FROM).unwrap());
    let to = a.to.unwrap_or_else(|| Timestamp::from_epoch(DEFAULT_TO).unwrap());
    if !(1..=ledgerstream_core::domain::MAX_FETCH_SIZE).contains(&a.fetch_size) {
        return Err(format!("--fetch-size must be in 1..={}", ledgerstream_core::domain::MAX_FETCH_SIZE));
    }
    if a.max_rows == Some(0) {
        return Err("--max-rows must be positive".into());
    }
    let req = ExportRequest::new(a.account, from, to, a.format)
        .map_err(|e| e.to_string())?
        .with_fetch_size(a.fetch_size)
        .with_max_rows(a.max_rows);
    let mut sink = open_output(&a.out)?;
    let report = run_export(a.engine, &store, &req, &mut sink).map_err(|e| e.to_string())?;
    let abort_reason = report.abort_reason.as_ref().map(|r| r.code());
    println!(
        "{}",
        json!({
            "out": a.out,
            "format": a.format,
            "rows": report.rows_processed,
            "bytes": report.bytes_written,
            "outcome": report.outcome,
            "abort_reason": abort_reason,
        })
    );
    Ok(if report.outcome == Outcome::Complete { EXIT_OK } else { EXIT_FAILURE })
}
