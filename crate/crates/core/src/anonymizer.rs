//! Keyed, invertible anonymization of IPv4 addresses.
//!
//! Each address is pushed through a balanced 4-round Feistel network over its
//! two 16-bit halves. The round function for round `i` is SipHash-2-4 keyed with
//! a 128-bit subkey, applied to the 2-byte big-endian half and truncated to its
//! low 16 bits. Subkey `i` is the first 16 bytes of
//! `SHA-256("hypertraffic/anon/v1" || secret || i)`.
//!
//! Because a Feistel network is a bijection for any round function, anonymized
//! traffic matrices are exact relabelings of the originals: no two addresses
//! ever collide.

use std::fmt;
use std::sync::Arc;

use sha2::{Digest, Sha256};
use siphasher::sip::SipHasher24;
use thiserror::Error;

use crate::ingest::PacketRecord;
use crate::pipeline::TrafficWindow;

pub const SECRET_LEN: usize = 16;
pub const ROUNDS: usize = 4;

const DERIVATION_DOMAIN: &[u8] = b"hypertraffic/anon/v1";
const HALF_SPACE: usize = 1 << 16;

#[derive(Debug, Error, PartialEq, Eq)]
pub enum KeyError {
    #[error("secret must be {SECRET_LEN} bytes, got {0}")]
    Length(usize),
    #[error("secret must be {} hex characters", SECRET_LEN * 2)]
    Hex,
}

/// Secret key defining one permutation of the 32-bit address space.
///
/// The round functions are tabulated at derivation time (4 x 65536 entries), so
/// anonymizing an address is four table lookups. Cloning shares the tables.
#[derive(Clone)]
pub struct AnonKey {
    round_keys: [[u8; 16]; ROUNDS],
    tables: Arc<[u16]>,
}

impl fmt::Debug for AnonKey {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str("AnonKey(<redacted>)")
    }
}

impl PartialEq for AnonKey {
    fn eq(&self, other: &Self) -> bool {
        self.round_keys == other.round_keys
    }
}

impl Eq for AnonKey {}

/// Derives the per-round subkeys and round-function tables from a 16-byte secret.
pub fn derive_key(secret: &[u8]) -> Result<AnonKey, KeyError> {
    let secret: [u8; SECRET_LEN] = secret.try_into().map_err(|_| KeyError::Length(secret.len()))?;
    let mut round_keys = [[0u8; 16]; ROUNDS];
    for (i, rk) in round_keys.iter_mut().enumerate() {
        let digest = Sha256::new()
            .chain_update(DERIVATION_DOMAIN)
            .chain_update(secret)
            .chain_update([i as u8])
            .finalize();
        rk.copy_from_slice(&digest[..16]);
    }

    let mut tables = vec![0u16; ROUNDS * HALF_SPACE];
    for (round, rk) in round_keys.iter().enumerate() {
        let k0 = u64::from_le_bytes(rk[..8].try_into().unwrap());
        let k1 = u64::from_le_bytes(rk[8..].try_into().unwrap());
        let sip = SipHasher24::new_with_keys(k0, k1);
        let table = &mut tables[round * HALF_SPACE..(round + 1) * HALF_SPACE];
        for (half, out) in table.iter_mut().enumerate() {
            *out = sip.hash(&(half as u16).to_be_bytes()) as u16;
        }
    }

    Ok(AnonKey { round_keys, tables: tables.into() })
}

impl AnonKey {
    /// Parses a 32-character hex secret.
    pub fn from_hex(text: &str) -> Result<AnonKey, KeyError> {
        let bytes = hex::decode(text.trim()).map_err(|_| KeyError::Hex)?;
        if bytes.len() != SECRET_LEN {
            return Err(KeyError::Hex);
        }
        derive_key(&bytes)
    }

    pub fn round_keys(&self) -> &[[u8; 16]; ROUNDS] {
        &self.round_keys
    }

    #[inline]
    fn round(&self, round: usize, half: u16) -> u16 {
        self.tables[round * HALF_SPACE + half as usize]
    }
}

/// Maps an address through the keyed permutation.
#[inline]
pub fn anonymize_ip(key: &AnonKey, ip: u32) -> u32 {
    let (mut left, mut right) = ((ip >> 16) as u16, ip as u16);
    for round in 0..ROUNDS {
        let next = left ^ key.round(round, right);
        left = right;
        right = next;
    }
    (u32::from(left) << 16) | u32::from(right)
}

/// Inverse of [`anonymize_ip`] under the same key.
#[inline]
pub fn deanonymize_ip(key: &AnonKey, ip: u32) -> u32 {
    let (mut left, mut right) = ((ip >> 16) as u16, ip as u16);
    for round in (0..ROUNDS).rev() {
        let prev = right ^ key.round(round, left);
        right = left;
        left = prev;
    }
    (u32::from(left) << 16) | u32::from(right)
}

pub fn anonymize_record(key: &AnonKey, record: PacketRecord) -> PacketRecord {
    PacketRecord { src: anonymize_ip(key, record.src), dst: anonymize_ip(key, record.dst) }
}

pub fn deanonymize_record(key: &AnonKey, record: PacketRecord) -> PacketRecord {
    PacketRecord { src: deanonymize_ip(key, record.src), dst: deanonymize_ip(key, record.dst) }
}

/// Anonymizes every record of a window, preserving length and order.
pub fn anonymize_window(key: &AnonKey, window: &TrafficWindow) -> TrafficWindow {
    let records = window.records().iter().map(|&r| anonymize_record(key, r)).collect();
    TrafficWindow::from_records(records, window.capacity())
}

/// In-place variant used on the benchmark hot path.
pub fn anonymize_in_place(key: &AnonKey, records: &mut [PacketRecord]) {
    for r in records {
        *r = anonymize_record(key, *r);
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn wrong_length_secret() {
        assert_eq!(derive_key(&[0u8; 15]).unwrap_err(), KeyError::Length(15));
        assert_eq!(derive_key(&[0u8; 17]).unwrap_err(), KeyError::Length(17));
    }

    #[test]
    fn deterministic_derivation() {
        let s = [7u8; 16];
        assert_eq!(derive_key(&s).unwrap(), derive_key(&s).unwrap());
        assert_ne!(derive_key(&s).unwrap(), derive_key(&[8u8; 16]).unwrap());
    }

    #[test]
    fn hex_parsing() {
        let k = AnonKey::from_hex("000102030405060708090a0b0c0d0e0f").unwrap();
        assert_eq!(k, derive_key(&(0u8..16).collect::<Vec<_>>()).unwrap());
        assert_eq!(AnonKey::from_hex("00").unwrap_err(), KeyError::Hex);
        assert_eq!(AnonKey::from_hex("zz0102030405060708090a0b0c0d0e0f").unwrap_err(), KeyError::Hex);
    }

    #[test]
    fn debug_hides_key_material() {
        let k = derive_key(&[0xab; 16]).unwrap();
        let shown = format!("{k:?}");
        assert!(!shown.contains("ab"), "{shown}");
        assert!(!shown.contains("171"), "{shown}");
    }

    #[test]
    fn edge_values_round_trip() {
        let k = derive_key(&[3u8; 16]).unwrap();
        for x in [0, 1, u32::MAX, 0x0000_ffff, 0xffff_0000] {
            assert_eq!(deanonymize_ip(&k, anonymize_ip(&k, x)), x);
            assert_eq!(anonymize_ip(&k, deanonymize_ip(&k, x)), x);
        }
    }

    #[test]
    fn window_shape_preserved() {
        let k = derive_key(&[1u8; 16]).unwrap();
        let empty = TrafficWindow::with_capacity(8);
        assert!(anonymize_window(&k, &empty).is_empty());
        let recs: Vec<PacketRecord> = (0..5).map(|i| PacketRecord { src: i, dst: i + 1 }).collect();
        let w = TrafficWindow::from_records(recs.clone(), 8);
        let anon = anonymize_window(&k, &w);
        assert_eq!(anon.len(), 5);
        assert_eq!(anon.capacity(), 8);
        for (a, r) in anon.records().iter().zip(&recs) {
            assert_eq!(*a, anonymize_record(&k, *r));
        }
    }
}
