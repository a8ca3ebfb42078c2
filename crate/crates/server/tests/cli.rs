use std::io::{BufRead, BufReader};
use std::path::Path;
use std::process::{Command, Output, Stdio};

use ledgerstream_server::client::{get, ClientOptions};

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_ledgerstream"))
}

fn run(args: &[&str]) -> Output {
    bin().args(args).output().expect("binary runs")
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn stdout_json(out: &Output) -> serde_json::Value {
    serde_json::from_slice(&out.stdout).unwrap_or_else(|e| panic!("{e}: {}", String::from_utf8_lossy(&out.stdout)))
}

#[test]
fn export_is_deterministic_and_verifies() {
    let dir = tempfile::tempdir().unwrap();
    let a = dir.path().join("a.qfx");
    let b = dir.path().join("b.qfx");
    for p in [&a, &b] {
        let out = run(&["export", "--format", "qfx", "--rows", "1000", "--seed", "7", "--out", s(p)]);
        assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
        let v = stdout_json(&out);
        assert_eq!(v["rows"], 1000);
        assert_eq!(v["outcome"], "COMPLETE");
    }
    assert!(std::fs::read(&a).unwrap() == std::fs::read(&b).unwrap());

    let out = run(&["verify", "--format", "qfx", s(&a)]);
    assert_eq!(out.status.code(), Some(0));
    let v = stdout_json(&out);
    assert_eq!(v["status"], "COMPLETE");
    assert_eq!(v["record_count"], 1000);
    assert_eq!(out.stdout.iter().filter(|&&c| c == b'\n').count(), 1);
}

#[test]
fn verify_exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    let full = dir.path().join("full.ofx");
    assert_eq!(run(&["export", "--format", "ofx", "--rows", "50", "--out", s(&full)]).status.code(), Some(0));
    let data = std::fs::read(&full).unwrap();

    let cut = dir.path().join("truncated.ofx");
    std::fs::write(&cut, &data[..data.len() / 2]).unwrap();
    let out = run(&["verify", "--format", "ofx", s(&cut)]);
    assert_eq!(out.status.code(), Some(2));
    assert_eq!(stdout_json(&out)["status"], "TRUNCATED");

    let bad = dir.path().join("bad.ofx");
    std::fs::write(&bad, b"this is not an export").unwrap();
    let out = run(&["verify", "--format", "ofx", s(&bad)]);
    assert_eq!(out.status.code(), Some(3));
    assert_eq!(stdout_json(&out)["status"], "MALFORMED");

    // A CSV checked as OFX is malformed, not truncated.
    let csv = dir.path().join("x.csv");
    assert_eq!(run(&["export", "--format", "csv", "--rows", "5", "--out", s(&csv)]).status.code(), Some(0));
    assert_eq!(run(&["verify", "--format", "ofx", s(&csv)]).status.code(), Some(3));

    assert_eq!(run(&["verify", "--format", "csv", s(&dir.path().join("missing"))]).status.code(), Some(1));
}

#[test]
fn gen_then_export_from_the_row_file() {
    let dir = tempfile::tempdir().unwrap();
    let rows = dir.path().join("rows.bin");
    let out = run(&["gen", "--seed", "42", "--rows", "2000", "--out", s(&rows)]);
    assert_eq!(out.status.code(), Some(0));
    let v = stdout_json(&out);
    assert_eq!(v["rows"], 2000);
    assert_eq!(v["digest"].as_str().unwrap().len(), 64);

    let from_file = dir.path().join("f.csv");
    let in_mem = dir.path().join("m.csv");
    assert_eq!(run(&["export", "--format", "csv", "--store", s(&rows), "--out", s(&from_file)]).status.code(), Some(0));
    assert_eq!(
        run(&[
            "export",
            "--format",
            "csv",
            "--rows",
            "2000",
            "--seed",
            "42",
            "--engine",
            "buffered",
            "--out",
            s(&in_mem)
        ])
        .status
        .code(),
        Some(0)
    );
    assert!(std::fs::read(&from_file).unwrap() == std::fs::read(&in_mem).unwrap());

    let part = dir.path().join("p.csv");
    let out = run(&[
        "export",
        "--format",
        "csv",
        "--store",
        s(&rows),
        "--from",
        "2024-03-01T00:00:00Z",
        "--to",
        "2024-03-31T23:59:59Z",
        "--max-rows",
        "10",
        "--out",
        s(&part),
    ]);
    assert_eq!(out.status.code(), Some(0));
    assert_eq!(stdout_json(&out)["rows"], 10);
}

#[test]
fn usage_errors_exit_64_and_help_documents_flags() {
    assert_eq!(run(&["nonsense"]).status.code(), Some(64));
    assert_eq!(run(&["export", "--format", "csv"]).status.code(), Some(64));
    assert_eq!(
        run(&["export", "--format", "csv", "--rows", "1", "--store", "x", "--out", "y"]).status.code(),
        Some(64)
    );
    assert_eq!(run(&["bench", "--engines", "turbo"]).status.code(), Some(64));
    assert_eq!(run(&[]).status.code(), Some(64));

    let help = run(&["serve", "--help"]);
    assert_eq!(help.status.code(), Some(0));
    let text = String::from_utf8(help.stdout).unwrap();
    for flag in
        ["--config", "--bind", "--store", "--max-concurrent", "--write-timeout", "--max-duration", "--fetch-size"]
    {
        assert!(text.contains(flag), "{flag}");
    }
}

#[test]
fn bench_writes_a_json_report() {
    let dir = tempfile::tempdir().unwrap();
    let report = dir.path().join("report.json");
    let out = run(&[
        "bench",
        "--sizes",
        "2000,5000",
        "--formats",
        "csv,qbo",
        "--repetitions",
        "2",
        "--cache-dir",
        s(&dir.path().join("cache")),
        "--out",
        s(&report),
    ]);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let v: serde_json::Value = serde_json::from_slice(&std::fs::read(&report).unwrap()).unwrap();
    let cells = v["cells"].as_array().unwrap();
    assert_eq!(cells.len(), 8);
    for c in cells {
        assert_eq!(c["status"], "OK");
        assert_eq!(c["samples"].as_array().unwrap().len(), 2);
        let expected_ttfb = if c["engine"] == "streaming" { 0 } else { c["size"].as_u64().unwrap() };
        assert_eq!(c["ttfb_logical_rows"], expected_ttfb);
    }
    assert!(dir.path().join("cache").read_dir().unwrap().count() >= 2);

    let table = run(&["bench", "--sizes", "1000", "--formats", "ofx", "--repetitions", "1", "--in-memory"]);
    assert_eq!(table.status.code(), Some(0));
    let text = String::from_utf8(table.stdout).unwrap();
    let header: Vec<&str> = text.lines().next().unwrap().split('|').map(str::trim).collect();
    assert_eq!(header[..5], ["Dataset Size", "Approach", "Format", "TTFB (rows)", "TTFB (ms)"]);
    assert_eq!(text.lines().filter(|l| l.contains("| OFX")).count(), 2);
    assert!(text.contains("project-defined"));
}

#[test]
fn serve_from_the_command_line() {
    let dir = tempfile::tempdir().unwrap();
    let rows = dir.path().join("rows.bin");
    assert_eq!(run(&["gen", "--rows", "100", "--out", s(&rows)]).status.code(), Some(0));
    let config = dir.path().join("svc.toml");
    std::fs::write(&config, "bind_address = \"127.0.0.1:1\"\nmax_concurrent_exports = 2\n").unwrap();

    let mut child = bin()
        .args(["serve", "--config", s(&config), "--bind", "127.0.0.1:0", "--store", s(&rows)])
        .stderr(Stdio::piped())
        .spawn()
        .unwrap();
    let mut stderr = BufReader::new(child.stderr.take().unwrap());
    let mut line = String::new();
    stderr.read_line(&mut line).unwrap();
    let addr = line.trim().strip_prefix("listening on http://").unwrap_or_else(|| panic!("{line}")).parse().unwrap();

    let health = get(addr, "/healthz", &ClientOptions::default()).unwrap();
    assert_eq!(health.json().unwrap()["store_rows"], 100);
    let t = "/v1/accounts/ACC-0001/transactions/export?format=csv&from=2024-01-01T00:00:00Z&to=2024-12-31T23:59:59Z";
    let resp = get(addr, t, &ClientOptions::default().header("X-Correlation-Id", "cli-1")).unwrap();
    assert_eq!(resp.status, 200);
    assert!(resp.complete);

    // One JSON log line per export on stderr.
    line.clear();
    stderr.read_line(&mut line).unwrap();
    let log: serde_json::Value = serde_json::from_str(&line).unwrap();
    assert_eq!(log["correlation_id"], "cli-1");
    assert_eq!(log["outcome"], "COMPLETE");
    assert_eq!(log["rows_processed"], 100);

    child.kill().unwrap();
    child.wait().unwrap();

    let bad = bin().args(["serve", "--store", s(&rows), "--max-concurrent", "0"]).output().unwrap();
    assert_eq!(bad.status.code(), Some(1));
}
