//! Hashing runtime that hardened programs execute against.
//!
//! Digests are SHA-256 over `salt || encode_value(v)`, optionally truncated to
//! a whole number of bytes. Their text form is
//! `sha256[/t<bits>][/s<hex-salt>]:<hex-bytes>` and is shared by MiniLang
//! source and JSON reports.

use std::fmt;
use std::str::FromStr;

use serde::{Serialize, Serializer};
use sha2::{Digest as _, Sha256};
use subtle::ConstantTimeEq;
use thiserror::Error;

use crate::value::Value;

pub const FULL_DIGEST_BITS: u16 = 256;
pub const MAX_SALT_LEN: usize = 32;

const TAG_INT: u8 = 0x01;
const TAG_STR: u8 = 0x02;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum DigestError {
    #[error("truncate_bits must be a multiple of 8 in 8..=256, got {0}")]
    InvalidTruncation(u32),
    #[error("salt is {0} bytes; at most 32 are allowed")]
    SaltTooLong(usize),
    #[error("digest has {found} bytes, configuration requires {expected}")]
    LengthMismatch { expected: usize, found: usize },
    #[error("digests were produced under different hash configurations")]
    ConfigMismatch,
    #[error("malformed digest literal: {0}")]
    Malformed(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum HashAlgorithm {
    #[default]
    Sha256,
}

/// Hash algorithm, public salt and output truncation.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize)]
pub struct HashConfig {
    algorithm: HashAlgorithm,
    #[serde(serialize_with = "hex_bytes")]
    salt: Vec<u8>,
    truncate_bits: u16,
}

pub(crate) fn hex_bytes<S: Serializer>(bytes: &[u8], serializer: S) -> Result<S::Ok, S::Error> {
    serializer.serialize_str(&hex::encode(bytes))
}

impl Default for HashConfig {
    fn default() -> Self {
        HashConfig {
            algorithm: HashAlgorithm::Sha256,
            salt: Vec::new(),
            truncate_bits: FULL_DIGEST_BITS,
        }
    }
}

impl HashConfig {
    /// An empty salt is the same as no salt.
    pub fn new(salt: Vec<u8>, truncate_bits: u32) -> Result<Self, DigestError> {
        if truncate_bits == 0 || truncate_bits > FULL_DIGEST_BITS as u32 || truncate_bits % 8 != 0
        {
            return Err(DigestError::InvalidTruncation(truncate_bits));
        }
        if salt.len() > MAX_SALT_LEN {
            return Err(DigestError::SaltTooLong(salt.len()));
        }
        Ok(HashConfig {
            algorithm: HashAlgorithm::Sha256,
            salt,
            truncate_bits: truncate_bits as u16,
        })
    }

    pub fn algorithm(&self) -> HashAlgorithm {
        self.algorithm
    }

    pub fn salt(&self) -> &[u8] {
        &self.salt
    }

    pub fn truncate_bits(&self) -> u32 {
        self.truncate_bits as u32
    }

    pub fn digest_len(&self) -> usize {
        self.truncate_bits as usize / 8
    }

    fn salted_hasher(&self) -> Sha256 {
        let mut hasher = Sha256::new();
        hasher.update(&self.salt);
        hasher
    }
}

/// A (possibly truncated, possibly salted) digest together with the
/// configuration that produced it.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct Digest {
    config: HashConfig,
    bytes: Vec<u8>,
}

impl Digest {
    pub fn from_parts(config: HashConfig, bytes: Vec<u8>) -> Result<Self, DigestError> {
        if bytes.len() != config.digest_len() {
            return Err(DigestError::LengthMismatch {
                expected: config.digest_len(),
                found: bytes.len(),
            });
        }
        Ok(Digest { config, bytes })
    }

    pub fn config(&self) -> &HashConfig {
        &self.config
    }

    pub fn bytes(&self) -> &[u8] {
        &self.bytes
    }
}

impl fmt::Display for Digest {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str("sha256")?;
        if self.config.truncate_bits != FULL_DIGEST_BITS {
            write!(f, "/t{}", self.config.truncate_bits)?;
        }
        if !self.config.salt.is_empty() {
            write!(f, "/s{}", hex::encode(&self.config.salt))?;
        }
        write!(f, ":{}", hex::encode(&self.bytes))
    }
}

impl FromStr for Digest {
    type Err = DigestError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let malformed = |why: &str| DigestError::Malformed(format!("{why} in {s:?}"));
        let (header, body) = s.split_once(':').ok_or_else(|| malformed("missing ':'"))?;
        let mut parts = header.split('/');
        if parts.next() != Some("sha256") {
            return Err(malformed("unknown algorithm"));
        }
        let mut truncate_bits = FULL_DIGEST_BITS as u32;
        let mut salt = Vec::new();
        let mut seen_t = false;
        let mut seen_s = false;
        for part in parts {
            if let Some(bits) = part.strip_prefix('t') {
                if seen_t || seen_s {
                    return Err(malformed("'/t' out of order"));
                }
                if bits.is_empty() || !bits.bytes().all(|b| b.is_ascii_digit()) {
                    return Err(malformed("bad truncation"));
                }
                truncate_bits = bits.parse().map_err(|_| malformed("bad truncation"))?;
                seen_t = true;
            } else if let Some(hex_salt) = part.strip_prefix('s') {
                if seen_s {
                    return Err(malformed("duplicate '/s'"));
                }
                salt = decode_lower_hex(hex_salt).ok_or_else(|| malformed("bad salt hex"))?;
                if salt.is_empty() {
                    return Err(malformed("empty salt"));
                }
                seen_s = true;
            } else {
                return Err(malformed("unknown option"));
            }
        }
        let config = HashConfig::new(salt, truncate_bits)?;
        let bytes = decode_lower_hex(body).ok_or_else(|| malformed("bad digest hex"))?;
        Digest::from_parts(config, bytes)
    }
}

impl Serialize for Digest {
    fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        serializer.collect_str(self)
    }
}

fn decode_lower_hex(s: &str) -> Option<Vec<u8>> {
    if s.bytes().any(|b| b.is_ascii_uppercase()) {
        return None;
    }
    hex::decode(s).ok()
}

/// Type-tagged encoding: `0x01 || be64` for ints, `0x02 || bytes` for strings.
pub fn encode_value(value: &Value) -> Vec<u8> {
    match value {
        Value::Int(n) => {
            let mut out = Vec::with_capacity(9);
            out.push(TAG_INT);
            out.extend_from_slice(&n.to_be_bytes());
            out
        }
        Value::Str(bytes) => {
            let mut out = Vec::with_capacity(bytes.len() + 1);
            out.push(TAG_STR);
            out.extend_from_slice(bytes);
            out
        }
    }
}

/// SHA-256 of `salt || data`, truncated to the configured prefix.
pub fn digest(data: &[u8], cfg: &HashConfig) -> Digest {
    let mut hasher = cfg.salted_hasher();
    hasher.update(data);
    let full = hasher.finalize();
    Digest {
        config: cfg.clone(),
        bytes: full[..cfg.digest_len()].to_vec(),
    }
}

/// Byte equality without early exit on the first differing byte.
pub fn digest_eq(a: &Digest, b: &Digest) -> Result<bool, DigestError> {
    if a.config != b.config {
        return Err(DigestError::ConfigMismatch);
    }
    Ok(a.bytes.ct_eq(&b.bytes).into())
}

/// Slides a `window_len`-byte window over `haystack` and reports whether the
/// digest of any full window (string-tagged) equals `target`.
///
/// Returns the match flag and the number of windows hashed, counting the
/// matching window. Haystacks shorter than the window hash nothing.
pub fn hash_contains(haystack: &[u8], target: &Digest, window_len: u64) -> (bool, u64) {
    assert!(window_len >= 1, "window_len must be at least 1");
    let Ok(window_len) = usize::try_from(window_len) else {
        return (false, 0);
    };
    if haystack.len() < window_len {
        return (false, 0);
    }
    let cfg = &target.config;
    let n = cfg.digest_len();
    let mut prefix = cfg.salted_hasher();
    prefix.update([TAG_STR]);
    let mut hashed = 0u64;
    for window in haystack.windows(window_len) {
        hashed += 1;
        let mut hasher = prefix.clone();
        hasher.update(window);
        let full = hasher.finalize();
        if bool::from(full[..n].ct_eq(&target.bytes)) {
            return (true, hashed);
        }
    }
    (false, hashed)
}

/// Union bound on the false-positive probability of `comparisons` digest
/// comparisons at `digest_bits` bits each, clamped to 1.
pub fn fp_bound(comparisons: u64, digest_bits: u32) -> f64 {
    assert!(digest_bits >= 1, "digest_bits must be at least 1");
    if comparisons == 0 {
        return 0.0;
    }
    let bound = comparisons as f64 * (-(digest_bits as f64)).exp2();
    bound.min(1.0)
}
