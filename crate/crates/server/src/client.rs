//! Minimal blocking HTTP/1.1 client for exercising the service over a real
//! socket. It decodes chunked bodies, tells a finished body from a cut one,
//! and can read slowly on purpose.

use std::io::{self, BufRead, BufReader, Read, Write};
use std::net::{SocketAddr, TcpStream};
use std::time::{Duration, Instant};

#[derive(Debug, Clone)]
pub struct ClientOptions {
    pub headers: Vec<(String, String)>,
    /// Upper bound on bytes taken from the socket per read.
    pub read_size: usize,
    /// Pause after each read; with `read_size` this throttles the client.
    pub read_delay: Duration,
    pub timeout: Duration,
}

impl Default for ClientOptions {
    fn default() -> Self {
        Self { headers: Vec::new(), read_size: 64 * 1024, read_delay: Duration::ZERO, timeout: Duration::from_secs(60) }
    }
}

impl ClientOptions {
    pub fn header(mut self, name: &str, value: &str) -> Self {
        self.headers.push((name.to_owned(), value.to_owned()));
        self
    }

    /// Reads at roughly `bytes_per_sec`, in reads of `read_size` bytes.
    pub fn throttled(mut self, read_size: usize, bytes_per_sec: u64) -> Self {
        self.read_size = read_size;
        self.read_delay = Duration::from_secs_f64(read_size as f64 / bytes_per_sec as f64);
        self
    }
}

#[derive(Debug, Clone)]
pub struct Response {
    pub status: u16,
    pub headers: Vec<(String, String)>,
    /// Decoded body.
    pub body: Vec<u8>,
    /// The body ended as its framing promised: a zero-length chunk, or
    /// `Content-Length` bytes, or end of stream for unframed bodies.
    pub complete: bool,
    pub chunked: bool,
    pub first_body_byte_after: Option<Duration>,
    pub elapsed: Duration,
}

impl Response {
    pub fn header(&self, name: &str) -> Option<&str> {
        self.headers.iter().find(|(n, _)| n.eq_ignore_ascii_case(name)).map(|(_, v)| v.as_str())
    }

    pub fn json(&self) -> serde_json::Result<serde_json::Value> {
        serde_json::from_slice(&self.body)
    }
}

struct Throttled {
    stream: TcpStream,
    read_size: usize,
    delay: Duration,
}

impl Read for Throttled {
    fn read(&mut self, buf: &mut [u8]) -> io::Result<usize> {
        let n = buf.len().min(self.read_size);
        let got = self.stream.read(&mut buf[..n])?;
        if !self.delay.is_zero() && got > 0 {
            std::thread::sleep(self.delay);
        }
        Ok(got)
    }
}

pub fn get(addr: SocketAddr, target: &str, opts: &ClientOptions) -> io::Result<Response> {
    get_with(addr, target, opts, || {})
}

/// Like [`get`], calling `on_first_body_byte` as soon as one decoded body
/// byte has arrived.
pub fn get_with(
    addr: SocketAddr,
    target: &str,
    opts: &ClientOptions,
    on_first_body_byte: impl FnOnce(),
) -> io::Result<Response> {
    let started = Instant::now();
    let mut stream = TcpStream::connect_timeout(&addr, opts.timeout)?;
    stream.set_read_timeout(Some(opts.timeout))?;
    let mut req = format!("GET {target} HTTP/1.1\r\nHost: {addr}\r\n");
    for (k, v) in &opts.headers {
        req.push_str(&format!("{k}: {v}\r\n"));
    }
    req.push_str("Connection: close\r\n\r\n");
    stream.write_all(req.as_bytes())?;

    let reader = Throttled { stream, read_size: opts.read_size.max(1), delay: opts.read_delay };
    let mut r = BufReader::with_capacity(opts.read_size.max(1), reader);

    let mut line = String::new();
    r.read_line(&mut line)?;
    let status = line
        .split_whitespace()
        .nth(1)
        .and_then(|s| s.parse().ok())
        .ok_or_else(|| io::Error::new(io::ErrorKind::InvalidData, format!("bad status line {line:?}")))?;
    let mut headers = Vec::new();
    loop {
        line.clear();
        if r.read_line(&mut line)? == 0 {
            return Err(io::Error::new(io::ErrorKind::UnexpectedEof, "connection closed inside headers"));
        }
        let l = line.trim_end_matches(['\r', '\n']);
        if l.is_empty() {
            break;
        }
        if let Some((k, v)) = l.split_once(':') {
            headers.push((k.trim().to_owned(), v.trim().to_owned()));
        }
    }
    let find = |name: &str| {
        headers.iter().find(|(n, _): &&(String, String)| n.eq_ignore_ascii_case(name)).map(|(_, v)| v.clone())
    };
    let chunked = find("Transfer-Encoding").is_some_and(|v| v.eq_ignore_ascii_case("chunked"));
    let length: Option<usize> = find("Content-Length").and_then(|v| v.parse().ok());

    let mut body = Vec::new();
    let mut first_at = None;
    let mut notify = Some(on_first_body_byte);
    let mut on_data = |body: &Vec<u8>| {
        if first_at.is_none() && !body.is_empty() {
            first_at = Some(started.elapsed());
            if let Some(f) = notify.take() {
                f();
            }
        }
    };

    let complete = if chunked {
        read_chunked(&mut r, &mut body, &mut on_data)
    } else {
        let mut buf = [0u8; 8192];
        loop {
            match r.read(&mut buf) {
                Ok(0) | Err(_) => break,
                Ok(n) => {
                    body.extend_from_slice(&buf[..n]);
                    on_data(&body);
                }
            }
        }
        length.is_none_or(|n| body.len() == n)
    };

    Ok(Response {
        status,
        headers,
        body,
        complete,
        chunked,
        first_body_byte_after: first_at,
        elapsed: started.elapsed(),
    })
}

/// Decodes chunks until the terminating chunk (true) or a cut (false).
fn read_chunked(r: &mut impl BufRead, body: &mut Vec<u8>, on_data: &mut impl FnMut(&Vec<u8>)) -> bool {
    let mut line = String::new();
    loop {
        line.clear();
        match r.read_line(&mut line) {
            Ok(0) | Err(_) => return false,
            Ok(_) => {}
        }
        if !line.ends_with("\r\n") {
            return false;
        }
        let size_text = line.trim_end().split(';').next().unwrap_or("");
        let Ok(size) = usize::from_str_radix(size_text, 16) else {
            return false;
        };
        if size == 0 {
            line.clear();
            return r.read_line(&mut line).is_ok() && line == "\r\n";
        }
        let mut left = size;
        let mut buf = [0u8; 8192];
        while left > 0 {
            let want = left.min(buf.len());
            match r.read(&mut buf[..want]) {
                Ok(0) | Err(_) => return false,
                Ok(n) => {
                    body.extend_from_slice(&buf[..n]);
                    left -= n;
                    on_data(body);
                }
            }
        }
        let mut crlf = [0u8; 2];
        if r.read_exact(&mut crlf).is_err() || &crlf != b"\r\n" {
            return false;
        }
    }
}
