//! Canonical byte encoding used for every digest and signature in the ledger.
//!
//! Fixed-width integers are written little-endian; variable-length octet
//! strings are prefixed with their u64 length; fields appear in declaration
//! order; map entries in key order. JSON persistence is a separate concern —
//! digests are always recomputed from this encoding, never from JSON bytes.

use sha2::{Digest, Sha256};

use crate::merkle::Cid;

#[derive(Default)]
pub struct CanonicalWriter {
    buf: Vec<u8>,
}

impl CanonicalWriter {
    pub fn new() -> Self {
        Self::default()
    }

    /// Domain tag separating encodings of different record kinds.
    pub fn tagged(tag: &str) -> Self {
        let mut w = Self::new();
        w.put_str(tag);
        w
    }

    pub fn put_u8(&mut self, v: u8) {
        self.buf.push(v);
    }

    pub fn put_u64(&mut self, v: u64) {
        self.buf.extend_from_slice(&v.to_le_bytes());
    }

    pub fn put_bytes(&mut self, v: &[u8]) {
        self.put_u64(v.len() as u64);
        self.buf.extend_from_slice(v);
    }

    pub fn put_str(&mut self, v: &str) {
        self.put_bytes(v.as_bytes());
    }

    /// Fixed-width octets (digests, keys): no length prefix.
    pub fn put_fixed(&mut self, v: &[u8]) {
        self.buf.extend_from_slice(v);
    }

    pub fn finish(self) -> Vec<u8> {
        self.buf
    }

    pub fn digest(self) -> Cid {
        Cid::from_digest(Sha256::digest(&self.buf).into())
    }
}

/// Types that contribute to a canonical digest.
pub trait CanonicalEncode {
    fn encode(&self, w: &mut CanonicalWriter);
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn length_prefix_disambiguates_concatenation() {
        let mut a = CanonicalWriter::new();
        a.put_bytes(b"ab");
        a.put_bytes(b"c");
        let mut b = CanonicalWriter::new();
        b.put_bytes(b"a");
        b.put_bytes(b"bc");
        assert_ne!(a.finish(), b.finish());
    }

    #[test]
    fn digest_is_stable() {
        let mut w = CanonicalWriter::tagged("test.record");
        w.put_u64(5);
        w.put_str("hello");
        let d1 = w.digest();
        let mut w = CanonicalWriter::tagged("test.record");
        w.put_u64(5);
        w.put_str("hello");
        assert_eq!(d1, w.digest());
    }
}
