//! Independent reference implementations shared by the integration tests.
//!
//! Nothing here calls into the library's hashing or table code, so agreement
//! between the two is meaningful.

#![allow(dead_code)]

use std::collections::BTreeMap;

use sha2::{Digest, Sha256};

/// Plain SipHash-2-4 written from the algorithm description.
pub fn siphash24(k0: u64, k1: u64, msg: &[u8]) -> u64 {
    let mut v0 = k0 ^ 0x736f6d6570736575;
    let mut v1 = k1 ^ 0x646f72616e646f6d;
    let mut v2 = k0 ^ 0x6c7967656e657261;
    let mut v3 = k1 ^ 0x7465646279746573;

    fn round(v: &mut [u64; 4]) {
        v[0] = v[0].wrapping_add(v[1]);
        v[1] = v[1].rotate_left(13);
        v[1] ^= v[0];
        v[0] = v[0].rotate_left(32);
        v[2] = v[2].wrapping_add(v[3]);
        v[3] = v[3].rotate_left(16);
        v[3] ^= v[2];
        v[0] = v[0].wrapping_add(v[3]);
        v[3] = v[3].rotate_left(21);
        v[3] ^= v[0];
        v[2] = v[2].wrapping_add(v[1]);
        v[1] = v[1].rotate_left(17);
        v[1] ^= v[2];
        v[2] = v[2].rotate_left(32);
    }

    let mut v = [v0, v1, v2, v3];
    let full = msg.len() / 8;
    for i in 0..full {
        let m = u64::from_le_bytes(msg[i * 8..i * 8 + 8].try_into().unwrap());
        v[3] ^= m;
        round(&mut v);
        round(&mut v);
        v[0] ^= m;
    }
    let mut last = (msg.len() as u64 & 0xff) << 56;
    for (i, &b) in msg[full * 8..].iter().enumerate() {
        last |= u64::from(b) << (8 * i);
    }
    v[3] ^= last;
    round(&mut v);
    round(&mut v);
    v[0] ^= last;
    v[2] ^= 0xff;
    for _ in 0..4 {
        round(&mut v);
    }
    (v0, v1, v2, v3) = (v[0], v[1], v[2], v[3]);
    v0 ^ v1 ^ v2 ^ v3
}

pub fn reference_round_keys(secret: &[u8; 16]) -> [[u8; 16]; 4] {
    let mut out = [[0u8; 16]; 4];
    for (i, rk) in out.iter_mut().enumerate() {
        let mut h = Sha256::new();
        h.update(b"hypertraffic/anon/v1");
        h.update(secret);
        h.update([i as u8]);
        rk.copy_from_slice(&h.finalize()[..16]);
    }
    out
}

fn round_fn(rk: &[u8; 16], half: u16) -> u16 {
    let k0 = u64::from_le_bytes(rk[..8].try_into().unwrap());
    let k1 = u64::from_le_bytes(rk[8..].try_into().unwrap());
    siphash24(k0, k1, &half.to_be_bytes()) as u16
}

/// Four-round Feistel evaluated directly, without precomputed tables.
pub fn reference_anonymize(secret: &[u8; 16], ip: u32) -> u32 {
    let rks = reference_round_keys(secret);
    let (mut l, mut r) = ((ip >> 16) as u16, ip as u16);
    for rk in &rks {
        (l, r) = (r, l ^ round_fn(rk, r));
    }
    (u32::from(l) << 16) | u32::from(r)
}

/// Associative-array count of a pair sequence.
pub fn count_oracle(pairs: &[(u32, u32)]) -> BTreeMap<(u32, u32), u64> {
    let mut out = BTreeMap::new();
    for &p in pairs {
        *out.entry(p).or_insert(0) += 1;
    }
    out
}

pub fn matrix_as_map(m: &hypertraffic::HypersparseMatrix) -> BTreeMap<(u32, u32), u64> {
    m.iter().map(|e| ((e.row, e.col), e.count)).collect()
}

pub fn parse_hex16(text: &str) -> [u8; 16] {
    hex::decode(text).unwrap().try_into().unwrap()
}

/// (secret, input, expected output) triples from the frozen fixture.
pub fn golden_vectors() -> Vec<([u8; 16], u32, u32)> {
    include_str!("../fixtures/anon_golden.tsv")
        .lines()
        .filter(|l| !l.is_empty())
        .map(|l| {
            let f: Vec<&str> = l.split('\t').collect();
            (parse_hex16(f[0]), f[1].parse().unwrap(), f[2].parse().unwrap())
        })
        .collect()
}

pub const ZERO_KEY_ROUND_KEYS: [&str; 4] = [
    "ae4929ec441db3d0cfeca78d367da6b5",
    "544f152108b7902bb5c75eda6bb216a5",
    "ba7dfcb55ce9d0df82d58c8ac6162d1c",
    "faa30aedfcde30b2d0400ad4eec612fb",
];

#[test]
fn siphash_reference_vectors() {
    let k0 = u64::from_le_bytes([0, 1, 2, 3, 4, 5, 6, 7]);
    let k1 = u64::from_le_bytes([8, 9, 10, 11, 12, 13, 14, 15]);
    assert_eq!(siphash24(k0, k1, &[]), 0x726fdb47dd0e0e31);
    let msg: Vec<u8> = (0..15).collect();
    assert_eq!(siphash24(k0, k1, &msg), 0xa129ca6149be45e5);
}
