//! Just enough HTTP/1.1 for the export service: request heads, fixed
//! responses, and a chunked response sink with write-stall and duration
//! limits.

use std::io::{self, Read, Write};
use std::net::{Shutdown, TcpStream};
use std::time::{Duration, Instant};

use ledgerstream_core::pipeline::{AbortReason, ChunkSink, SinkError};

pub const MAX_HEAD_BYTES: usize = 16 * 1024;
const MAX_HEADERS: usize = 64;

/// Bytes coalesced before a chunk is sent. Batch boundaries flush early.
pub const TRANSPORT_BUFFER: usize = 8 * 1024;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RequestHead {
    pub method: String,
    /// Request target as sent, including any query string.
    pub target: String,
    pub headers: Vec<(String, String)>,
}

impl RequestHead {
    pub fn header(&self, name: &str) -> Option<&str> {
        self.headers.iter().find(|(n, _)| n.eq_ignore_ascii_case(name)).map(|(_, v)| v.as_str())
    }

    pub fn path(&self) -> &str {
        self.target.split_once('?').map_or(&self.target, |(p, _)| p)
    }

    pub fn query(&self) -> &str {
        self.target.split_once('?').map_or("", |(_, q)| q)
    }
}

#[derive(Debug, thiserror::Error)]
pub enum HeadError {
    #[error("connection closed before a full request head")]
    Eof,
    #[error("request head larger than {MAX_HEAD_BYTES} bytes")]
    TooLarge,
    #[error("malformed request: {0}")]
    Parse(String),
    #[error(transparent)]
    Io(#[from] io::Error),
}

/// Reads and parses one request head. Any body is ignored.
pub fn read_head(stream: &mut impl Read) -> Result<RequestHead, HeadError> {
    let mut buf = Vec::with_capacity(1024);
    let mut chunk = [0u8; 1024];
    loop {
        let n = stream.read(&mut chunk)?;
        if n == 0 {
            return Err(HeadError::Eof);
        }
        buf.extend_from_slice(&chunk[..n]);
        let mut headers = [httparse::EMPTY_HEADER; MAX_HEADERS];
        let mut req = httparse::Request::new(&mut headers);
        match req.parse(&buf) {
            Ok(httparse::Status::Complete(_)) => {
                let headers = req
                    .headers
                    .iter()
                    .map(|h| (h.name.to_owned(), String::from_utf8_lossy(h.value).into_owned()))
                    .collect();
                return Ok(RequestHead {
                    method: req.method.unwrap_or_default().to_owned(),
                    target: req.path.unwrap_or_default().to_owned(),
                    headers,
                });
            }
            Ok(httparse::Status::Partial) if buf.len() >= MAX_HEAD_BYTES => return Err(HeadError::TooLarge),
            Ok(httparse::Status::Partial) => {}
            Err(e) => return Err(HeadError::Parse(e.to_string())),
        }
    }
}

pub fn reason_phrase(status: u16) -> &'static str {
    match status {
        200 => "OK",
        400 => "Bad Request",
        404 => "Not Found",
        405 => "Method Not Allowed",
        429 => "Too Many Requests",
        500 => "Internal Server Error",
        _ => "Unknown",
    }
}

/// Renders a status line and headers, ending with the blank line.
pub fn render_head(status: u16, headers: &[(&str, String)]) -> Vec<u8> {
    let mut out = format!("HTTP/1.1 {status} {}\r\n", reason_phrase(status));
    for (k, v) in headers {
        out.push_str(k);
        out.push_str(": ");
        out.push_str(v);
        out.push_str("\r\n");
    }
    out.push_str("\r\n");
    out.into_bytes()
}

/// A complete response with a fixed-length body.
pub fn write_full_response(
    stream: &mut impl Write,
    status: u16,
    content_type: &str,
    extra: &[(&str, String)],
    body: &[u8],
) -> io::Result<()> {
    let mut headers = vec![
        ("Content-Type", content_type.to_owned()),
        ("Content-Length", body.len().to_string()),
        ("Connection", "close".to_owned()),
    ];
    headers.extend(extra.iter().cloned());
    let mut out = render_head(status, &headers);
    out.extend_from_slice(body);
    stream.write_all(&out)?;
    stream.flush()
}

/// Response body sink using chunked transfer coding.
///
/// The status line and headers go out with the first chunk, so a failure
/// before any body byte can still be answered with a 500. Writes coalesce
/// into a buffer of [`TRANSPORT_BUFFER`] bytes; a full buffer or a flush at a
/// batch boundary becomes one chunk. An abort after the head was sent closes
/// the connection without the terminating zero-length chunk, which the
/// client sees as a truncated download.
pub struct HttpChunkSink {
    stream: TcpStream,
    head: Option<Vec<u8>>,
    error_body: Option<Vec<u8>>,
    buf: Vec<u8>,
    deadline: Instant,
    body_bytes_sent: u64,
    status_sent: Option<u16>,
    ended: bool,
}

impl HttpChunkSink {
    /// `head` must declare `Transfer-Encoding: chunked`. `error_body` is the
    /// problem document sent with a 500 if the export fails before the head
    /// goes out.
    pub fn new(
        stream: TcpStream,
        head: Vec<u8>,
        error_body: Vec<u8>,
        write_timeout: Duration,
        max_duration: Duration,
    ) -> io::Result<Self> {
        stream.set_write_timeout(Some(write_timeout))?;
        Ok(Self {
            stream,
            head: Some(head),
            error_body: Some(error_body),
            buf: Vec::with_capacity(TRANSPORT_BUFFER),
            deadline: Instant::now() + max_duration,
            body_bytes_sent: 0,
            status_sent: None,
            ended: false,
        })
    }

    /// Body bytes handed to the socket, excluding chunk framing.
    pub fn body_bytes_sent(&self) -> u64 {
        self.body_bytes_sent
    }

    /// Status line that went out, if any.
    pub fn status_sent(&self) -> Option<u16> {
        self.status_sent
    }

    fn take_head(&mut self) -> Vec<u8> {
        self.error_body = None;
        match self.head.take() {
            Some(h) => {
                self.status_sent = Some(200);
                h
            }
            None => Vec::new(),
        }
    }

    fn check_deadline(&self) -> Result<(), SinkError> {
        if Instant::now() > self.deadline {
            Err(SinkError::DurationExceeded)
        } else {
            Ok(())
        }
    }

    fn send(&mut self, bytes: &[u8]) -> Result<(), SinkError> {
        self.stream.write_all(bytes).map_err(map_io)
    }

    fn send_chunk(&mut self) -> Result<(), SinkError> {
        if self.buf.is_empty() {
            return Ok(());
        }
        let mut frame = self.take_head();
        frame.extend_from_slice(format!("{:X}\r\n", self.buf.len()).as_bytes());
        self.send(&frame)?;
        let data = std::mem::take(&mut self.buf);
        let sent = self.send(&data).and_then(|()| self.send(b"\r\n"));
        if sent.is_ok() {
            self.body_bytes_sent += data.len() as u64;
        }
        self.buf = data;
        self.buf.clear();
        sent
    }
}

fn map_io(e: io::Error) -> SinkError {
    match e.kind() {
        io::ErrorKind::WouldBlock | io::ErrorKind::TimedOut => SinkError::Timeout,
        io::ErrorKind::BrokenPipe
        | io::ErrorKind::ConnectionReset
        | io::ErrorKind::ConnectionAborted
        | io::ErrorKind::NotConnected
        | io::ErrorKind::UnexpectedEof
        | io::ErrorKind::WriteZero => SinkError::Closed,
        _ => SinkError::Io(e.to_string()),
    }
}

impl ChunkSink for HttpChunkSink {
    fn write(&mut self, bytes: &[u8]) -> Result<(), SinkError> {
        if self.ended {
            return Err(SinkError::Ended);
        }
        self.check_deadline()?;
        let mut rest = bytes;
        while !rest.is_empty() {
            let room = TRANSPORT_BUFFER - self.buf.len();
            let take = room.min(rest.len());
            self.buf.extend_from_slice(&rest[..take]);
            rest = &rest[take..];
            if self.buf.len() == TRANSPORT_BUFFER {
                self.send_chunk()?;
            }
        }
        Ok(())
    }

    fn flush(&mut self) -> Result<(), SinkError> {
        if self.ended {
            return Err(SinkError::Ended);
        }
        self.check_deadline()?;
        self.send_chunk()?;
        self.stream.flush().map_err(map_io)
    }

    fn finish(&mut self) -> Result<(), SinkError> {
        if self.ended {
            return Err(SinkError::Ended);
        }
        self.send_chunk()?;
        let mut tail = self.take_head();
        tail.extend_from_slice(b"0\r\n\r\n");
        self.send(&tail)?;
        self.ended = true;
        self.stream.flush().map_err(map_io)?;
        let _ = self.stream.shutdown(Shutdown::Write);
        Ok(())
    }

    fn abort(&mut self, _reason: &AbortReason) {
        if self.ended {
            return;
        }
        self.ended = true;
        if self.head.is_some() {
            if let Some(body) = self.error_body.take() {
                let _ = write_full_response(&mut self.stream, 500, "application/problem+json", &[], &body);
                self.status_sent = Some(500);
            }
            self.head = None;
        }
        let _ = self.stream.shutdown(Shutdown::Both);
    }
}
