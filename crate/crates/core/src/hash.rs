//! Digests and the canonical byte encoding used for every commitment.
//!
//! All hashing goes through [`sha256`] so the algorithm can be swapped in a
//! single place. Structures are serialized as a sequence of fields, each a
//! 4-byte big-endian length followed by the field bytes; integers are 8-byte
//! big-endian.

use std::fmt;

use serde::{Deserialize, Deserializer, Serialize, Serializer};
use sha2::{Digest, Sha256};
use thiserror::Error;

/// A 32-byte digest.
#[derive(Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Default)]
pub struct Hash256(pub [u8; 32]);

impl Hash256 {
    pub const ZERO: Hash256 = Hash256([0u8; 32]);

    pub fn as_bytes(&self) -> &[u8; 32] {
        &self.0
    }

    pub fn is_zero(&self) -> bool {
        self.0 == [0u8; 32]
    }

    pub fn to_hex(&self) -> String {
        hex::encode(self.0)
    }

    pub fn from_hex(s: &str) -> Result<Self, DecodeError> {
        let raw = hex::decode(s).map_err(|_| DecodeError::BadHex)?;
        Self::from_slice(&raw)
    }

    pub fn from_slice(raw: &[u8]) -> Result<Self, DecodeError> {
        let arr: [u8; 32] = raw.try_into().map_err(|_| DecodeError::BadLength {
            expected: 32,
            got: raw.len(),
        })?;
        Ok(Hash256(arr))
    }

    /// Leading eight bytes as a big-endian integer.
    pub fn prefix_u64(&self) -> u64 {
        u64::from_be_bytes(self.0[..8].try_into().unwrap())
    }
}

impl fmt::Debug for Hash256 {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", &self.to_hex()[..12])
    }
}

impl fmt::Display for Hash256 {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.to_hex())
    }
}

impl Serialize for Hash256 {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_str(&self.to_hex())
    }
}

impl<'de> Deserialize<'de> for Hash256 {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        Hash256::from_hex(&s).map_err(serde::de::Error::custom)
    }
}

pub fn sha256(data: &[u8]) -> Hash256 {
    Hash256(Sha256::digest(data).into())
}

/// Hash of the concatenation of two digests.
pub fn hash_pair(left: &Hash256, right: &Hash256) -> Hash256 {
    let mut h = Sha256::new();
    h.update(left.0);
    h.update(right.0);
    Hash256(h.finalize().into())
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum DecodeError {
    #[error("unexpected end of input")]
    Truncated,
    #[error("bad field length: expected {expected}, got {got}")]
    BadLength { expected: usize, got: usize },
    #[error("invalid hex string")]
    BadHex,
    #[error("unknown tag {0}")]
    UnknownTag(u8),
    #[error("invalid utf-8 in string field")]
    BadUtf8,
    #[error("trailing bytes after message")]
    Trailing,
}

/// Writer for the canonical field encoding.
#[derive(Default, Debug, Clone)]
pub struct Encoder {
    buf: Vec<u8>,
}

impl Encoder {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn with_capacity(cap: usize) -> Self {
        Encoder {
            buf: Vec::with_capacity(cap),
        }
    }

    pub fn field(&mut self, bytes: &[u8]) -> &mut Self {
        self.buf
            .extend_from_slice(&(bytes.len() as u32).to_be_bytes());
        self.buf.extend_from_slice(bytes);
        self
    }

    pub fn u64(&mut self, v: u64) -> &mut Self {
        self.field(&v.to_be_bytes())
    }

    pub fn u8(&mut self, v: u8) -> &mut Self {
        self.field(&[v])
    }

    pub fn hash(&mut self, h: &Hash256) -> &mut Self {
        self.field(&h.0)
    }

    pub fn str(&mut self, s: &str) -> &mut Self {
        self.field(s.as_bytes())
    }

    /// Raw bytes with no length prefix.
    pub fn raw(&mut self, bytes: &[u8]) -> &mut Self {
        self.buf.extend_from_slice(bytes);
        self
    }

    pub fn len(&self) -> usize {
        self.buf.len()
    }

    pub fn is_empty(&self) -> bool {
        self.buf.is_empty()
    }

    pub fn as_slice(&self) -> &[u8] {
        &self.buf
    }

    pub fn finish(self) -> Vec<u8> {
        self.buf
    }

    pub fn digest(&self) -> Hash256 {
        sha256(&self.buf)
    }
}

/// Reader for the canonical field encoding.
#[derive(Debug, Clone)]
pub struct Decoder<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Decoder<'a> {
    pub fn new(buf: &'a [u8]) -> Self {
        Decoder { buf, pos: 0 }
    }

    pub fn field(&mut self) -> Result<&'a [u8], DecodeError> {
        let len_bytes = self.raw(4)?;
        let len = u32::from_be_bytes(len_bytes.try_into().unwrap()) as usize;
        self.raw(len)
    }

    pub fn raw(&mut self, n: usize) -> Result<&'a [u8], DecodeError> {
        let end = self.pos.checked_add(n).ok_or(DecodeError::Truncated)?;
        if end > self.buf.len() {
            return Err(DecodeError::Truncated);
        }
        let out = &self.buf[self.pos..end];
        self.pos = end;
        Ok(out)
    }

    pub fn u64(&mut self) -> Result<u64, DecodeError> {
        let f = self.field()?;
        let arr: [u8; 8] = f.try_into().map_err(|_| DecodeError::BadLength {
            expected: 8,
            got: f.len(),
        })?;
        Ok(u64::from_be_bytes(arr))
    }

    pub fn u8(&mut self) -> Result<u8, DecodeError> {
        match self.field()? {
            [b] => Ok(*b),
            other => Err(DecodeError::BadLength {
                expected: 1,
                got: other.len(),
            }),
        }
    }

    pub fn hash(&mut self) -> Result<Hash256, DecodeError> {
        Hash256::from_slice(self.field()?)
    }

    pub fn string(&mut self) -> Result<String, DecodeError> {
        String::from_utf8(self.field()?.to_vec()).map_err(|_| DecodeError::BadUtf8)
    }

    pub fn remaining(&self) -> usize {
        self.buf.len() - self.pos
    }

    pub fn finish(&self) -> Result<(), DecodeError> {
        if self.remaining() == 0 {
            Ok(())
        } else {
            Err(DecodeError::Trailing)
        }
    }
}
