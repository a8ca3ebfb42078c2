use std::fmt::Write as _;
use std::path::Path;
use std::str::FromStr;

use ledgerstream_core::pipeline::EngineKind;

use super::{BenchCell, BenchReport, CellStatus, Transport};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ReportMode {
    Table,
    Csv,
    Json,
}

impl ReportMode {
    /// `.json` and `.csv` select those modes; anything else is a table.
    pub fn for_path(path: &Path) -> Self {
        match path.extension().and_then(|e| e.to_str()).map(str::to_ascii_lowercase).as_deref() {
            Some("json") => ReportMode::Json,
            Some("csv") => ReportMode::Csv,
            _ => ReportMode::Table,
        }
    }
}

impl FromStr for ReportMode {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        match s.to_ascii_lowercase().as_str() {
            "table" | "text" => Ok(ReportMode::Table),
            "csv" => Ok(ReportMode::Csv),
            "json" => Ok(ReportMode::Json),
            _ => Err(format!("unknown report mode {s:?} (expected table, csv or json)")),
        }
    }
}

pub fn render_report(report: &BenchReport, mode: ReportMode) -> Vec<u8> {
    match mode {
        ReportMode::Table => render_table(report).into_bytes(),
        ReportMode::Csv => render_csv(report).into_bytes(),
        ReportMode::Json => {
            let mut out = serde_json::to_vec_pretty(report).expect("report serializes");
            out.push(b'\n');
            out
        }
    }
}

const TABLE_HEADER: [&str; 9] = [
    "Dataset Size",
    "Approach",
    "Format",
    "TTFB (rows)",
    "TTFB (ms)",
    "Total (ms)",
    "Peak Memory (bytes)",
    "Bytes",
    "Throughput (rows/s)",
];

fn approach(engine: EngineKind) -> &'static str {
    match engine {
        EngineKind::Buffered => "Buffered",
        EngineKind::Streaming => "Streaming",
    }
}

fn opt<T: ToString>(v: Option<T>) -> String {
    v.map_or_else(|| "-".to_owned(), |v| v.to_string())
}

fn table_row(c: &BenchCell) -> [String; 9] {
    let lead = [c.size.to_string(), approach(c.engine).to_owned(), c.format.as_str().to_uppercase()];
    let metrics = if c.status == CellStatus::Failed {
        std::array::from_fn(|_| "FAILED".to_owned())
    } else {
        [
            opt(c.ttfb_logical_rows),
            opt(c.ttfb_wallclock_ms.map(|m| format!("{m:.3}"))),
            format!("{:.3}", c.total_ms),
            c.peak_buffer_bytes.to_string(),
            c.bytes.to_string(),
            format!("{:.0}", c.throughput_rows_per_s),
        ]
    };
    let [a, b, f] = lead;
    let [m0, m1, m2, m3, m4, m5] = metrics;
    [a, b, f, m0, m1, m2, m3, m4, m5]
}

fn render_table(report: &BenchReport) -> String {
    let rows: Vec<[String; 9]> = report.cells.iter().map(table_row).collect();
    let widths: Vec<usize> =
        (0..9).map(|i| rows.iter().map(|r| r[i].len()).chain([TABLE_HEADER[i].len()]).max().unwrap_or(0)).collect();
    let mut out = String::new();
    let line = |cells: &[&str], out: &mut String| {
        let parts: Vec<String> = cells
            .iter()
            .enumerate()
            .map(|(i, c)| if i < 3 { format!("{c:<w$}", w = widths[i]) } else { format!("{c:>w$}", w = widths[i]) })
            .collect();
        out.push_str(parts.join(" | ").trim_end());
        out.push('\n');
    };
    line(&TABLE_HEADER, &mut out);
    let rule: Vec<String> = widths.iter().map(|w| "-".repeat(*w)).collect();
    out.push_str(&rule.join("-+-"));
    out.push('\n');
    for r in &rows {
        let cells: Vec<&str> = r.iter().map(String::as_str).collect();
        line(&cells, &mut out);
    }

    out.push('\n');
    let transport = match report.transport {
        Transport::InProcess => "in-process",
        Transport::HttpLoopback => "http-loopback",
    };
    let _ = writeln!(
        out,
        "transport {transport}, fetch size {}, seed {}, {} repetition(s), {} concurrent export(s)",
        report.fetch_size, report.seed, report.repetitions, report.concurrent
    );
    for c in report.cells.iter().filter(|c| c.status == CellStatus::Failed) {
        let _ = writeln!(
            out,
            "FAILED {} {} {}: {}",
            c.size,
            approach(c.engine),
            c.format,
            c.error.as_deref().unwrap_or("unknown error")
        );
    }
    out.push_str(
        "Peak Memory is the largest serialized output the engine held at once. Wall-clock columns are medians and \
         informational only. Pass/fail thresholds used with this report are project-defined.\n",
    );
    out
}

const CSV_HEADER: &str = "size,approach,format,status,rows,bytes,ttfb_logical_rows,ttfb_wallclock_ms,total_ms,\
peak_buffer_bytes,aggregate_peak_buffer_bytes,throughput_rows_per_s,ttfb_wallclock_ms_samples,total_ms_samples,error";

fn csv_field(s: &str) -> String {
    if s.contains([',', '"', '\n', '\r']) {
        format!("\"{}\"", s.replace('"', "\"\""))
    } else {
        s.to_owned()
    }
}

fn render_csv(report: &BenchReport) -> String {
    let mut out = String::from(CSV_HEADER);
    out.push('\n');
    for c in &report.cells {
        let join = |xs: Vec<String>| xs.join(";");
        let fields = [
            c.size.to_string(),
            c.engine.to_string(),
            c.format.to_string(),
            format!("{:?}", c.status).to_uppercase(),
            c.rows.to_string(),
            c.bytes.to_string(),
            c.ttfb_logical_rows.map(|v| v.to_string()).unwrap_or_default(),
            c.ttfb_wallclock_ms.map(|v| v.to_string()).unwrap_or_default(),
            c.total_ms.to_string(),
            c.peak_buffer_bytes.to_string(),
            c.aggregate_peak_buffer_bytes.to_string(),
            c.throughput_rows_per_s.to_string(),
            join(c.samples.iter().map(|s| s.ttfb_wallclock_ms.map(|v| v.to_string()).unwrap_or_default()).collect()),
            join(c.samples.iter().map(|s| s.total_ms.to_string()).collect()),
            c.error.clone().unwrap_or_default(),
        ];
        let fields: Vec<String> = fields.iter().map(|f| csv_field(f)).collect();
        out.push_str(&fields.join(","));
        out.push('\n');
    }
    out
}
