//! Classic libpcap capture files.
//!
//! Layout: a 24-byte global header (magic, version, zone, sigfigs, snaplen,
//! linktype) followed by records, each a 16-byte header (seconds, sub-second
//! fraction, captured length, original length) plus `captured length` bytes of
//! frame. The magic fixes both the byte order and whether the fraction is in
//! micro- or nanoseconds. Timestamps are read and discarded.

use std::io::{self, Read, Write};

use thiserror::Error;

use super::frame::ipv4_checksum;
use super::{IngestStats, PacketRecord, ETHERTYPE_IPV4};

pub const MAGIC_MICROS: u32 = 0xa1b2_c3d4;
pub const MAGIC_NANOS: u32 = 0xa1b2_3c4d;
pub const GLOBAL_HEADER_LEN: usize = 24;
pub const RECORD_HEADER_LEN: usize = 16;
pub const LINKTYPE_ETHERNET: u32 = 1;

#[derive(Debug, Error)]
pub enum PcapError {
    #[error("byte offset 0: bad pcap magic {magic:#010x}")]
    BadMagic { magic: u32 },
    #[error("byte offset {offset}: truncated global header ({GLOBAL_HEADER_LEN} bytes required)")]
    TruncatedGlobalHeader { offset: u64 },
    #[error("byte offset {offset}: truncated record header ({RECORD_HEADER_LEN} bytes required)")]
    TruncatedRecordHeader { offset: u64 },
    #[error("byte offset {offset}: record declares {captured} captured bytes but only {remaining} remain")]
    RecordOverrun { offset: u64, captured: u32, remaining: u64 },
    #[error(transparent)]
    Io(#[from] io::Error),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum ByteOrder {
    Little,
    Big,
}

impl ByteOrder {
    fn u32(self, b: &[u8]) -> u32 {
        let b: [u8; 4] = b[..4].try_into().unwrap();
        match self {
            ByteOrder::Little => u32::from_le_bytes(b),
            ByteOrder::Big => u32::from_be_bytes(b),
        }
    }
}

/// One capture record. `ts_frac` is micro- or nanoseconds depending on the file.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RawRecord {
    pub ts_sec: u32,
    pub ts_frac: u32,
    pub data: Vec<u8>,
}

/// Streaming reader yielding raw frames in file order.
pub struct PcapReader<R> {
    inner: R,
    order: ByteOrder,
    nanosecond: bool,
    linktype: u32,
    snaplen: u32,
    offset: u64,
}

impl<R: Read> PcapReader<R> {
    pub fn new(mut inner: R) -> Result<Self, PcapError> {
        let mut header = [0u8; GLOBAL_HEADER_LEN];
        let got = read_full(&mut inner, &mut header)?;
        if got >= 4 {
            let le = u32::from_le_bytes(header[..4].try_into().unwrap());
            if ![MAGIC_MICROS, MAGIC_NANOS].contains(&le)
                && ![MAGIC_MICROS, MAGIC_NANOS].contains(&le.swap_bytes())
            {
                return Err(PcapError::BadMagic { magic: u32::from_be_bytes(header[..4].try_into().unwrap()) });
            }
        }
        if got < GLOBAL_HEADER_LEN {
            return Err(PcapError::TruncatedGlobalHeader { offset: got as u64 });
        }
        let le = u32::from_le_bytes(header[..4].try_into().unwrap());
        let (order, nanosecond) = match le {
            MAGIC_MICROS => (ByteOrder::Little, false),
            MAGIC_NANOS => (ByteOrder::Little, true),
            m if m.swap_bytes() == MAGIC_MICROS => (ByteOrder::Big, false),
            _ => (ByteOrder::Big, true),
        };
        Ok(Self {
            inner,
            order,
            nanosecond,
            snaplen: order.u32(&header[16..20]),
            linktype: order.u32(&header[20..24]),
            offset: GLOBAL_HEADER_LEN as u64,
        })
    }

    pub fn linktype(&self) -> u32 {
        self.linktype
    }

    pub fn snaplen(&self) -> u32 {
        self.snaplen
    }

    pub fn is_nanosecond(&self) -> bool {
        self.nanosecond
    }

    /// Next captured frame, or `None` at a clean end of file.
    pub fn next_frame(&mut self) -> Result<Option<Vec<u8>>, PcapError> {
        Ok(self.next_raw()?.map(|r| r.data))
    }

    /// Next record with its timestamp fields.
    pub fn next_raw(&mut self) -> Result<Option<RawRecord>, PcapError> {
        let mut header = [0u8; RECORD_HEADER_LEN];
        let record_offset = self.offset;
        match read_full(&mut self.inner, &mut header)? {
            0 => return Ok(None),
            RECORD_HEADER_LEN => {}
            _ => return Err(PcapError::TruncatedRecordHeader { offset: record_offset }),
        }
        let captured = self.order.u32(&header[8..12]);
        let mut frame = Vec::new();
        let got = (&mut self.inner).take(u64::from(captured)).read_to_end(&mut frame)?;
        if got < captured as usize {
            return Err(PcapError::RecordOverrun { offset: record_offset, captured, remaining: got as u64 });
        }
        self.offset += (RECORD_HEADER_LEN + got) as u64;
        Ok(Some(RawRecord {
            ts_sec: self.order.u32(&header[0..4]),
            ts_frac: self.order.u32(&header[4..8]),
            data: frame,
        }))
    }
}

impl<R: Read> Iterator for PcapReader<R> {
    type Item = Result<Vec<u8>, PcapError>;

    fn next(&mut self) -> Option<Self::Item> {
        self.next_frame().transpose()
    }
}

fn read_full<R: Read>(r: &mut R, buf: &mut [u8]) -> io::Result<usize> {
    let mut filled = 0;
    while filled < buf.len() {
        match r.read(&mut buf[filled..]) {
            Ok(0) => break,
            Ok(n) => filled += n,
            Err(e) if e.kind() == io::ErrorKind::Interrupted => {}
            Err(e) => return Err(e),
        }
    }
    Ok(filled)
}

/// Reads a whole capture, returning the IPv4 records in file order and the
/// accounting for every frame.
pub fn parse_pcap<R: Read>(source: R) -> Result<(Vec<PacketRecord>, IngestStats), PcapError> {
    let mut reader = PcapReader::new(source)?;
    let mut records = Vec::new();
    let mut stats = IngestStats::default();
    while let Some(frame) = reader.next_frame()? {
        if let Some(rec) = stats.observe_frame(&frame) {
            records.push(rec);
        }
    }
    Ok((records, stats))
}

/// Minimum Ethernet frame without FCS.
pub const MIN_FRAME_LEN: usize = 60;

/// A 60-byte Ethernet II + IPv4 frame carrying `record`'s addresses, with a
/// valid header checksum and zero padding.
pub fn encode_ipv4_frame(record: PacketRecord) -> [u8; MIN_FRAME_LEN] {
    let mut f = [0u8; MIN_FRAME_LEN];
    f[0..6].copy_from_slice(&[0x02, 0, 0, 0, 0, 0x02]);
    f[6..12].copy_from_slice(&[0x02, 0, 0, 0, 0, 0x01]);
    f[12..14].copy_from_slice(&ETHERTYPE_IPV4.to_be_bytes());
    let ip = &mut f[14..34];
    ip[0] = 0x45;
    ip[2..4].copy_from_slice(&46u16.to_be_bytes());
    ip[8] = 64;
    ip[9] = 253; // experimental protocol number
    ip[12..16].copy_from_slice(&record.src.to_be_bytes());
    ip[16..20].copy_from_slice(&record.dst.to_be_bytes());
    let sum = ipv4_checksum(ip);
    ip[10..12].copy_from_slice(&sum.to_be_bytes());
    f
}

/// Writes little-endian captures with Ethernet linktype.
pub struct PcapWriter<W: Write> {
    inner: W,
}

impl<W: Write> PcapWriter<W> {
    /// Microsecond timestamps.
    pub fn new(inner: W) -> io::Result<Self> {
        Self::with_resolution(inner, false)
    }

    pub fn with_resolution(mut inner: W, nanosecond: bool) -> io::Result<Self> {
        let magic = if nanosecond { MAGIC_NANOS } else { MAGIC_MICROS };
        let mut h = Vec::with_capacity(GLOBAL_HEADER_LEN);
        h.extend_from_slice(&magic.to_le_bytes());
        h.extend_from_slice(&2u16.to_le_bytes());
        h.extend_from_slice(&4u16.to_le_bytes());
        h.extend_from_slice(&0i32.to_le_bytes());
        h.extend_from_slice(&0u32.to_le_bytes());
        h.extend_from_slice(&65535u32.to_le_bytes());
        h.extend_from_slice(&LINKTYPE_ETHERNET.to_le_bytes());
        inner.write_all(&h)?;
        Ok(Self { inner })
    }

    pub fn write_frame(&mut self, ts_sec: u32, ts_frac: u32, frame: &[u8]) -> io::Result<()> {
        let len = frame.len() as u32;
        let mut h = [0u8; RECORD_HEADER_LEN];
        h[0..4].copy_from_slice(&ts_sec.to_le_bytes());
        h[4..8].copy_from_slice(&ts_frac.to_le_bytes());
        h[8..12].copy_from_slice(&len.to_le_bytes());
        h[12..16].copy_from_slice(&len.to_le_bytes());
        self.inner.write_all(&h)?;
        self.inner.write_all(frame)
    }

    pub fn write_record(&mut self, ts_sec: u32, ts_frac: u32, record: PacketRecord) -> io::Result<()> {
        self.write_frame(ts_sec, ts_frac, &encode_ipv4_frame(record))
    }

    pub fn finish(mut self) -> io::Result<W> {
        self.inner.flush()?;
        Ok(self.inner)
    }
}
