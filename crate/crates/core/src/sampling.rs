//! Publicly verifiable draws with replacement from `1..=n_upper`.
//!
//! Draw `counter` is derived from `SHA-256(seed ‖ decimal(counter))`. The
//! first 8 bytes of the digest, read big-endian, are accepted when they fall
//! below the largest multiple of `n_upper` that fits in 64 bits; the draw is
//! then `value % n_upper + 1`. A rejected candidate is replaced by hashing
//! `seed ‖ decimal(counter) ‖ "," ‖ decimal(retry)` for `retry = 1, 2, ...`,
//! so rejections never shift later counters. `docs/SAMPLER.md` is the full
//! description.

use alloc::string::String;
use alloc::vec::Vec;
use core::fmt::Write as _;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum SamplingError {
    #[error("upper bound must be at least 1, got {0}")]
    InvalidUpperBound(u64),
    #[error("seed material is empty")]
    EmptySeed,
}

/// Externally supplied seed, typically from a public dice-rolling ceremony.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AuditSeed {
    #[serde(with = "hex_bytes")]
    seed_material: Vec<u8>,
    #[serde(default)]
    pub origin_note: String,
}

impl AuditSeed {
    pub fn new(seed_material: impl Into<Vec<u8>>, origin_note: impl Into<String>) -> Result<Self, SamplingError> {
        let seed_material = seed_material.into();
        if seed_material.is_empty() {
            return Err(SamplingError::EmptySeed);
        }
        Ok(Self {
            seed_material,
            origin_note: origin_note.into(),
        })
    }

    pub fn seed_material(&self) -> &[u8] {
        &self.seed_material
    }

    pub fn to_hex(&self) -> String {
        hex_bytes::encode(&self.seed_material)
    }
}

/// `SHA-256(seed ‖ decimal(counter))`, optionally with a `",retry"` suffix.
pub fn hash_counter(seed: &[u8], counter: u64, retry: u64) -> [u8; 32] {
    let mut text = String::new();
    let _ = write!(text, "{counter}");
    if retry > 0 {
        let _ = write!(text, ",{retry}");
    }
    let mut h = Sha256::new();
    h.update(seed);
    h.update(text.as_bytes());
    h.finalize().into()
}

/// The `counter`-th draw (counting from 0) of the sequence for `seed`.
pub fn draw_next(seed: &AuditSeed, counter: u64, n_upper: u64) -> Result<u64, SamplingError> {
    if n_upper < 1 {
        return Err(SamplingError::InvalidUpperBound(n_upper));
    }
    // 2^64 mod n_upper; candidates at or above 2^64 - rem are rejected
    let rem = (u64::MAX % n_upper + 1) % n_upper;
    let mut retry = 0u64;
    loop {
        let digest = hash_counter(&seed.seed_material, counter, retry);
        let mut head = [0u8; 8];
        head.copy_from_slice(&digest[..8]);
        let value = u64::from_be_bytes(head);
        if rem == 0 || value <= u64::MAX - rem {
            return Ok(value % n_upper + 1);
        }
        retry += 1;
    }
}

pub fn draw_batch(
    seed: &AuditSeed,
    start_counter: u64,
    count: usize,
    n_upper: u64,
) -> Result<Vec<u64>, SamplingError> {
    (0..count as u64)
        .map(|i| draw_next(seed, start_counter + i, n_upper))
        .collect()
}

/// Draws generated so far for one audit.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DrawSequence {
    pub n_upper: u64,
    pub draws: Vec<u64>,
}

impl DrawSequence {
    pub fn new(n_upper: u64) -> Result<Self, SamplingError> {
        if n_upper < 1 {
            return Err(SamplingError::InvalidUpperBound(n_upper));
        }
        Ok(Self {
            n_upper,
            draws: Vec::new(),
        })
    }

    pub fn next_counter(&self) -> u64 {
        self.draws.len() as u64
    }

    pub fn advance(&mut self, seed: &AuditSeed) -> u64 {
        // n_upper was validated at construction
        let d = draw_next(seed, self.next_counter(), self.n_upper).expect("validated bound");
        self.draws.push(d);
        d
    }
}

pub(crate) mod hex_bytes {
    use alloc::string::String;
    use alloc::vec::Vec;
    use serde::{Deserialize, Deserializer, Serializer};

    const DIGITS: &[u8; 16] = b"0123456789abcdef";

    pub fn encode(bytes: &[u8]) -> String {
        let mut s = String::with_capacity(bytes.len() * 2);
        for b in bytes {
            s.push(DIGITS[(b >> 4) as usize] as char);
            s.push(DIGITS[(b & 0xf) as usize] as char);
        }
        s
    }

    pub fn decode(text: &str) -> Option<Vec<u8>> {
        let text = text.trim();
        if text.len() % 2 != 0 {
            return None;
        }
        let nibble = |c: u8| match c {
            b'0'..=b'9' => Some(c - b'0'),
            b'a'..=b'f' => Some(c - b'a' + 10),
            b'A'..=b'F' => Some(c - b'A' + 10),
            _ => None,
        };
        text.as_bytes()
            .chunks(2)
            .map(|p| Some(nibble(p[0])? << 4 | nibble(p[1])?))
            .collect()
    }

    pub fn serialize<S: Serializer>(bytes: &[u8], s: S) -> Result<S::Ok, S::Error> {
        s.serialize_str(&encode(bytes))
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Vec<u8>, D::Error> {
        let text = String::deserialize(d)?;
        let bytes = decode(&text).ok_or_else(|| serde::de::Error::custom("invalid hex seed"))?;
        if bytes.is_empty() {
            return Err(serde::de::Error::custom("seed material is empty"));
        }
        Ok(bytes)
    }
}

pub use hex_bytes::decode as decode_hex;
