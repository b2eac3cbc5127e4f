use super::PacketRecord;

pub const ETHERTYPE_IPV4: u16 = 0x0800;
pub const ETHERTYPE_VLAN: u16 = 0x8100;

const ETH_HEADER: usize = 14;
const VLAN_TAG: usize = 4;
const IPV4_MIN_HEADER: usize = 20;

/// Why a frame produced no record.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DropReason {
    NonIpv4,
    Truncated,
    Malformed,
}

/// Extracts the IPv4 source and destination from an Ethernet II frame.
///
/// At most one 802.1Q tag is skipped; a second tag (QinQ) is treated as
/// non-IPv4. IPv4 options are ignored since the addresses sit in the fixed
/// 20-byte header. Never panics for any input.
pub fn parse_ethernet_frame(frame: &[u8]) -> Result<PacketRecord, DropReason> {
    let ip = &frame[ipv4_offset(frame)?..];
    Ok(PacketRecord {
        src: u32::from_be_bytes([ip[12], ip[13], ip[14], ip[15]]),
        dst: u32::from_be_bytes([ip[16], ip[17], ip[18], ip[19]]),
    })
}

fn ipv4_offset(frame: &[u8]) -> Result<usize, DropReason> {
    if frame.len() < ETH_HEADER {
        return Err(DropReason::Truncated);
    }
    let mut ethertype = u16::from_be_bytes([frame[12], frame[13]]);
    let mut offset = ETH_HEADER;
    if ethertype == ETHERTYPE_VLAN {
        if frame.len() < ETH_HEADER + VLAN_TAG {
            return Err(DropReason::Truncated);
        }
        ethertype = u16::from_be_bytes([frame[16], frame[17]]);
        offset += VLAN_TAG;
    }
    if ethertype != ETHERTYPE_IPV4 {
        return Err(DropReason::NonIpv4);
    }
    if frame.len() < offset + IPV4_MIN_HEADER {
        return Err(DropReason::Truncated);
    }
    Ok(offset)
}

/// Rewrites the source and destination of an IPv4 frame in place and refreshes
/// the header checksum. Frames that would not parse are left untouched.
pub fn rewrite_ipv4_addresses(frame: &mut [u8], map: impl Fn(u32) -> u32) -> Result<PacketRecord, DropReason> {
    let offset = ipv4_offset(frame)?;
    let ip = &mut frame[offset..];
    let src = map(u32::from_be_bytes([ip[12], ip[13], ip[14], ip[15]]));
    let dst = map(u32::from_be_bytes([ip[16], ip[17], ip[18], ip[19]]));
    ip[12..16].copy_from_slice(&src.to_be_bytes());
    ip[16..20].copy_from_slice(&dst.to_be_bytes());
    let header_len = (usize::from(ip[0] & 0x0f) * 4).clamp(IPV4_MIN_HEADER, ip.len());
    let sum = ipv4_checksum(&ip[..header_len]);
    ip[10..12].copy_from_slice(&sum.to_be_bytes());
    Ok(PacketRecord { src, dst })
}

/// Ones-complement checksum over an IPv4 header, skipping its checksum field.
pub fn ipv4_checksum(header: &[u8]) -> u16 {
    let mut sum: u32 = 0;
    for (i, chunk) in header.chunks(2).enumerate() {
        if i == 5 {
            continue;
        }
        let word = u16::from_be_bytes([chunk[0], *chunk.get(1).unwrap_or(&0)]);
        sum += u32::from(word);
    }
    while sum > 0xffff {
        sum = (sum & 0xffff) + (sum >> 16);
    }
    !(sum as u16)
}
