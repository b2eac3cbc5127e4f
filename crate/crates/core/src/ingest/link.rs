//! Emulated point-to-point packet link.
//!
//! Records travel as fixed 8-byte chunks: `src` then `dst`, each 4 bytes
//! big-endian, packed back to back. Two transports are offered:
//!
//! * [`Transport::Lossless`] is a TCP byte stream carrying a single sender's
//!   records in order. The stream ends when the sender closes.
//! * [`Transport::Datagram`] packs up to [`RECORDS_PER_DATAGRAM`] records per
//!   UDP datagram. Datagrams can be lost; a datagram whose length is not a
//!   multiple of 8 is counted as one malformed drop. The stream ends on an
//!   explicit stop or after an idle timeout.

use std::io::{self, Read, Write};
use std::net::{SocketAddr, TcpListener, TcpStream, ToSocketAddrs, UdpSocket};
use std::sync::atomic::{AtomicBool, Ordering};
use std::sync::Arc;
use std::thread;
use std::time::{Duration, Instant};

use thiserror::Error;

use super::{IngestStats, PacketRecord};

pub const RECORD_BYTES: usize = 8;
pub const RECORDS_PER_DATAGRAM: usize = 512;

const STREAM_CHUNK_RECORDS: usize = 8192;
const POLL_INTERVAL: Duration = Duration::from_millis(20);

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Transport {
    #[default]
    Lossless,
    Datagram,
}

impl std::str::FromStr for Transport {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "lossless" | "tcp" => Ok(Transport::Lossless),
            "datagram" | "udp" => Ok(Transport::Datagram),
            other => Err(format!("unknown transport {other:?} (expected lossless or datagram)")),
        }
    }
}

#[derive(Debug, Error)]
pub enum LinkError {
    #[error("cannot resolve endpoint {0:?}")]
    Resolve(String),
    #[error("cannot bind {endpoint}: {source}")]
    Bind { endpoint: String, source: io::Error },
    #[error("cannot connect to {endpoint}: {source}")]
    Connect { endpoint: String, source: io::Error },
    #[error("link i/o: {0}")]
    Io(#[from] io::Error),
}

impl LinkError {
    pub fn is_addr_in_use(&self) -> bool {
        matches!(self, LinkError::Bind { source, .. } if source.kind() == io::ErrorKind::AddrInUse)
    }
}

fn resolve(endpoint: &str) -> Result<SocketAddr, LinkError> {
    endpoint
        .to_socket_addrs()
        .ok()
        .and_then(|mut it| it.next())
        .ok_or_else(|| LinkError::Resolve(endpoint.to_string()))
}

pub fn encode_records(records: &[PacketRecord], out: &mut Vec<u8>) {
    out.reserve(records.len() * RECORD_BYTES);
    for r in records {
        out.extend_from_slice(&r.src.to_be_bytes());
        out.extend_from_slice(&r.dst.to_be_bytes());
    }
}

/// Decodes whole records, ignoring any trailing partial chunk.
pub fn decode_records(bytes: &[u8], out: &mut Vec<PacketRecord>) {
    out.extend(bytes.chunks_exact(RECORD_BYTES).map(|c| PacketRecord {
        src: u32::from_be_bytes([c[0], c[1], c[2], c[3]]),
        dst: u32::from_be_bytes([c[4], c[5], c[6], c[7]]),
    }));
}

#[derive(Debug, Clone, Default)]
pub struct SendOptions {
    pub transport: Transport,
    /// Records per second; unlimited when `None`.
    pub rate_limit: Option<f64>,
    /// Stop sending once this much time has passed.
    pub duration: Option<Duration>,
}

/// Sends `records` to `endpoint`, returning how many were handed to the socket.
pub fn send_records<I>(endpoint: &str, records: I, opts: &SendOptions) -> Result<u64, LinkError>
where
    I: IntoIterator<Item = PacketRecord>,
{
    let addr = resolve(endpoint)?;
    let mut sink = match opts.transport {
        Transport::Lossless => {
            let stream = TcpStream::connect(addr)
                .map_err(|source| LinkError::Connect { endpoint: endpoint.to_string(), source })?;
            Sink::Stream(stream)
        }
        Transport::Datagram => {
            let local: SocketAddr = if addr.is_ipv4() { "0.0.0.0:0" } else { "[::]:0" }.parse().unwrap();
            let socket = UdpSocket::bind(local)
                .map_err(|source| LinkError::Bind { endpoint: local.to_string(), source })?;
            Sink::Datagram(socket, addr)
        }
    };

    let chunk_records = match (opts.transport, opts.rate_limit) {
        (Transport::Datagram, None) => RECORDS_PER_DATAGRAM,
        (Transport::Lossless, None) => STREAM_CHUNK_RECORDS,
        // roughly one chunk per millisecond when paced
        (t, Some(rate)) => {
            let cap = if t == Transport::Datagram { RECORDS_PER_DATAGRAM } else { STREAM_CHUNK_RECORDS };
            ((rate / 1000.0) as usize).clamp(1, cap)
        }
    };

    let start = Instant::now();
    let mut sent: u64 = 0;
    let mut iter = records.into_iter();
    let mut chunk = Vec::with_capacity(chunk_records);
    let mut bytes = Vec::with_capacity(chunk_records * RECORD_BYTES);
    loop {
        if let Some(limit) = opts.duration {
            if start.elapsed() >= limit {
                break;
            }
        }
        chunk.clear();
        chunk.extend(iter.by_ref().take(chunk_records));
        if chunk.is_empty() {
            break;
        }
        if let Some(rate) = opts.rate_limit {
            let due = start + Duration::from_secs_f64(sent as f64 / rate);
            let now = Instant::now();
            if due > now {
                thread::sleep(due - now);
            }
        }
        bytes.clear();
        encode_records(&chunk, &mut bytes);
        sink.send(&bytes)?;
        sent += chunk.len() as u64;
    }
    sink.finish()?;
    Ok(sent)
}

enum Sink {
    Stream(TcpStream),
    Datagram(UdpSocket, SocketAddr),
}

impl Sink {
    fn send(&mut self, bytes: &[u8]) -> Result<(), LinkError> {
        match self {
            Sink::Stream(s) => s.write_all(bytes)?,
            Sink::Datagram(sock, to) => {
                for dgram in bytes.chunks(RECORDS_PER_DATAGRAM * RECORD_BYTES) {
                    match sock.send_to(dgram, *to) {
                        Ok(_) => {}
                        // nobody listening; datagrams are allowed to vanish
                        Err(e) if e.kind() == io::ErrorKind::ConnectionRefused => {}
                        Err(e) => return Err(e.into()),
                    }
                }
            }
        }
        Ok(())
    }

    fn finish(self) -> Result<(), LinkError> {
        if let Sink::Stream(mut s) = self {
            s.flush()?;
            s.shutdown(std::net::Shutdown::Write)?;
            // wait for the receiver to close so every byte is consumed before we return
            let mut sink = [0u8; 64];
            while matches!(s.read(&mut sink), Ok(n) if n > 0) {}
        }
        Ok(())
    }
}

/// Cloneable flag that ends a receive loop.
#[derive(Debug, Clone, Default)]
pub struct StopHandle(Arc<AtomicBool>);

impl StopHandle {
    pub fn stop(&self) {
        self.0.store(true, Ordering::Release);
    }

    pub fn is_stopped(&self) -> bool {
        self.0.load(Ordering::Acquire)
    }
}

enum Bound {
    Tcp(TcpListener),
    Udp(UdpSocket),
}

/// A bound, not yet connected receive endpoint.
pub struct LinkReceiver {
    bound: Bound,
    local: SocketAddr,
    stop: StopHandle,
    idle_timeout: Option<Duration>,
}

impl LinkReceiver {
    pub fn bind(endpoint: &str, transport: Transport) -> Result<Self, LinkError> {
        let addr = resolve(endpoint)?;
        let bind_err = |source| LinkError::Bind { endpoint: endpoint.to_string(), source };
        let bound = match transport {
            Transport::Lossless => Bound::Tcp(TcpListener::bind(addr).map_err(bind_err)?),
            Transport::Datagram => {
                let sock = UdpSocket::bind(addr).map_err(bind_err)?;
                sock.set_read_timeout(Some(POLL_INTERVAL))?;
                Bound::Udp(sock)
            }
        };
        let local = match &bound {
            Bound::Tcp(l) => l.local_addr()?,
            Bound::Udp(s) => s.local_addr()?,
        };
        Ok(Self { bound, local, stop: StopHandle::default(), idle_timeout: None })
    }

    pub fn local_addr(&self) -> SocketAddr {
        self.local
    }

    pub fn stop_handle(&self) -> StopHandle {
        self.stop.clone()
    }

    /// End the stream after this long without traffic.
    pub fn with_idle_timeout(mut self, timeout: Duration) -> Self {
        self.idle_timeout = Some(timeout);
        self
    }

    /// Waits for the sender (lossless) and returns the record stream. A stop
    /// before any sender connects yields an empty stream.
    pub fn open(self) -> Result<RecordStream, LinkError> {
        let conn = match self.bound {
            Bound::Tcp(listener) => {
                listener.set_nonblocking(true)?;
                let since = Instant::now();
                loop {
                    match listener.accept() {
                        Ok((stream, _)) => {
                            stream.set_nonblocking(false)?;
                            stream.set_read_timeout(Some(POLL_INTERVAL))?;
                            break Some(Conn::Tcp(stream));
                        }
                        Err(e) if e.kind() == io::ErrorKind::WouldBlock => {
                            let idle = self.idle_timeout.is_some_and(|t| since.elapsed() >= t);
                            if self.stop.is_stopped() || idle {
                                break None;
                            }
                            thread::sleep(Duration::from_millis(1));
                        }
                        Err(e) => return Err(e.into()),
                    }
                }
            }
            Bound::Udp(sock) => Some(Conn::Udp(sock)),
        };
        Ok(RecordStream {
            conn,
            buf: vec![0u8; STREAM_CHUNK_RECORDS * RECORD_BYTES],
            carry: Vec::with_capacity(RECORD_BYTES),
            pending: Vec::new(),
            pos: 0,
            stats: IngestStats::default(),
            stop: self.stop,
            idle_timeout: self.idle_timeout,
            last_activity: Instant::now(),
        })
    }
}

enum Conn {
    Tcp(TcpStream),
    Udp(UdpSocket),
}

/// Records in arrival order plus their accounting.
pub struct RecordStream {
    conn: Option<Conn>,
    buf: Vec<u8>,
    carry: Vec<u8>,
    pending: Vec<PacketRecord>,
    pos: usize,
    stats: IngestStats,
    stop: StopHandle,
    idle_timeout: Option<Duration>,
    last_activity: Instant,
}

impl RecordStream {
    pub fn stats(&self) -> IngestStats {
        self.stats
    }

    /// Appends up to `max` records to `out`; returns 0 only at end of stream.
    pub fn next_batch(&mut self, out: &mut Vec<PacketRecord>, max: usize) -> Result<usize, LinkError> {
        while self.pos == self.pending.len() {
            self.pending.clear();
            self.pos = 0;
            if !self.fill()? {
                return Ok(0);
            }
        }
        let take = (self.pending.len() - self.pos).min(max);
        out.extend_from_slice(&self.pending[self.pos..self.pos + take]);
        self.pos += take;
        Ok(take)
    }

    fn should_end(&self) -> bool {
        self.stop.is_stopped() || self.idle_timeout.is_some_and(|t| self.last_activity.elapsed() >= t)
    }

    // Reads more bytes into `pending`. Returns false at end of stream.
    fn fill(&mut self) -> Result<bool, LinkError> {
        loop {
            let Some(conn) = self.conn.as_mut() else { return Ok(false) };
            match conn {
                Conn::Tcp(stream) => match stream.read(&mut self.buf) {
                    Ok(0) => {
                        if !self.carry.is_empty() {
                            self.stats.dropped_malformed += 1;
                            self.carry.clear();
                        }
                        self.conn = None;
                        return Ok(false);
                    }
                    Ok(n) => {
                        self.last_activity = Instant::now();
                        let mut data = &self.buf[..n];
                        let before = self.pending.len();
                        if !self.carry.is_empty() {
                            let need = RECORD_BYTES - self.carry.len();
                            let take = need.min(data.len());
                            self.carry.extend_from_slice(&data[..take]);
                            data = &data[take..];
                            if self.carry.len() == RECORD_BYTES {
                                decode_records(&self.carry, &mut self.pending);
                                self.carry.clear();
                            }
                        }
                        let whole = data.len() / RECORD_BYTES * RECORD_BYTES;
                        decode_records(&data[..whole], &mut self.pending);
                        self.carry.extend_from_slice(&data[whole..]);
                        self.stats.accepted += (self.pending.len() - before) as u64;
                        if self.pending.len() > before {
                            return Ok(true);
                        }
                    }
                    Err(e) if is_timeout(&e) => {
                        if self.should_end() {
                            self.conn = None;
                            return Ok(false);
                        }
                    }
                    Err(e) if e.kind() == io::ErrorKind::Interrupted => {}
                    Err(e) => return Err(e.into()),
                },
                Conn::Udp(sock) => match sock.recv_from(&mut self.buf) {
                    Ok((n, _)) => {
                        self.last_activity = Instant::now();
                        if n % RECORD_BYTES != 0 {
                            self.stats.dropped_malformed += 1;
                            continue;
                        }
                        let before = self.pending.len();
                        decode_records(&self.buf[..n], &mut self.pending);
                        self.stats.accepted += (self.pending.len() - before) as u64;
                        if self.pending.len() > before {
                            return Ok(true);
                        }
                    }
                    Err(e) if is_timeout(&e) => {
                        if self.should_end() {
                            self.conn = None;
                            return Ok(false);
                        }
                    }
                    Err(e) if e.kind() == io::ErrorKind::Interrupted => {}
                    Err(e) => return Err(e.into()),
                },
            }
        }
    }
}

fn is_timeout(e: &io::Error) -> bool {
    matches!(e.kind(), io::ErrorKind::WouldBlock | io::ErrorKind::TimedOut)
}

impl Iterator for RecordStream {
    type Item = Result<PacketRecord, LinkError>;

    fn next(&mut self) -> Option<Self::Item> {
        if self.pos < self.pending.len() {
            self.pos += 1;
            return Some(Ok(self.pending[self.pos - 1]));
        }
        let mut one = Vec::with_capacity(1);
        match self.next_batch(&mut one, 1) {
            Ok(0) => None,
            Ok(_) => Some(Ok(one[0])),
            Err(e) => Some(Err(e)),
        }
    }
}

/// Binds `endpoint`, receives until the stream ends and returns everything.
///
/// Lossless streams end when the sender closes; datagram streams end after
/// `idle_timeout` without traffic.
pub fn recv_records(
    endpoint: &str,
    transport: Transport,
    idle_timeout: Option<Duration>,
) -> Result<(Vec<PacketRecord>, IngestStats), LinkError> {
    let mut rx = LinkReceiver::bind(endpoint, transport)?;
    if let Some(t) = idle_timeout {
        rx = rx.with_idle_timeout(t);
    }
    collect_stream(rx.open()?)
}

pub fn collect_stream(mut stream: RecordStream) -> Result<(Vec<PacketRecord>, IngestStats), LinkError> {
    let mut out = Vec::new();
    while stream.next_batch(&mut out, usize::MAX)? > 0 {}
    Ok((out, stream.stats()))
}
