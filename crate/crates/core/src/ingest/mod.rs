//! Packet sources: pcap files, raw Ethernet frames, seeded synthetic traffic and
//! the emulated point-to-point link.

mod frame;
pub mod link;
pub mod pcap;
mod synth;

use std::fmt;
use std::net::Ipv4Addr;

use serde::{Deserialize, Serialize};

pub use frame::{ipv4_checksum, parse_ethernet_frame, rewrite_ipv4_addresses, DropReason, ETHERTYPE_IPV4, ETHERTYPE_VLAN};
pub use link::{recv_records, send_records, LinkError, LinkReceiver, RecordStream, SendOptions, StopHandle, Transport, RECORD_BYTES};
pub use pcap::{encode_ipv4_frame, parse_pcap, PcapError, PcapReader, PcapWriter, RawRecord};
pub use synth::{synth_uniform, SynthUniform};

/// Source and destination of one observed packet, as host-order integers of the
/// big-endian on-wire address bytes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Default)]
pub struct PacketRecord {
    pub src: u32,
    pub dst: u32,
}

impl PacketRecord {
    pub fn new(src: u32, dst: u32) -> Self {
        Self { src, dst }
    }

    pub fn pair(self) -> (u32, u32) {
        (self.src, self.dst)
    }
}

impl From<(u32, u32)> for PacketRecord {
    fn from((src, dst): (u32, u32)) -> Self {
        Self { src, dst }
    }
}

impl fmt::Display for PacketRecord {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{} -> {}", Ipv4Addr::from(self.src), Ipv4Addr::from(self.dst))
    }
}

/// Accept/drop accounting; `accepted` plus every drop counter equals the number
/// of frames (or wire chunks) examined.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct IngestStats {
    pub accepted: u64,
    pub dropped_non_ipv4: u64,
    pub dropped_truncated: u64,
    pub dropped_malformed: u64,
}

impl IngestStats {
    pub fn examined(&self) -> u64 {
        self.accepted + self.dropped()
    }

    pub fn dropped(&self) -> u64 {
        self.dropped_non_ipv4 + self.dropped_truncated + self.dropped_malformed
    }

    pub fn count_drop(&mut self, reason: DropReason) {
        match reason {
            DropReason::NonIpv4 => self.dropped_non_ipv4 += 1,
            DropReason::Truncated => self.dropped_truncated += 1,
            DropReason::Malformed => self.dropped_malformed += 1,
        }
    }

    /// Parses `frame`, advancing the matching counter.
    pub fn observe_frame(&mut self, frame: &[u8]) -> Option<PacketRecord> {
        match parse_ethernet_frame(frame) {
            Ok(rec) => {
                self.accepted += 1;
                Some(rec)
            }
            Err(reason) => {
                self.count_drop(reason);
                None
            }
        }
    }

    pub fn merge(&mut self, other: &IngestStats) {
        self.accepted += other.accepted;
        self.dropped_non_ipv4 += other.dropped_non_ipv4;
        self.dropped_truncated += other.dropped_truncated;
        self.dropped_malformed += other.dropped_malformed;
    }
}
