//! Content chunking, content identifiers, Merkle DAG construction, and
//! inclusion proofs — what lets a reader check shards served by untrusted
//! miners against a single anchored root.
//!
//! The DAG is a binary hash tree over fixed-size chunks. Leaf digests are
//! `sha256(0x00 || chunk)`, interior digests `sha256(0x01 || left || right)`;
//! the prefixes keep leaves and interior nodes in disjoint domains so a
//! subtree can never be replayed as a leaf. An odd node at any level is
//! promoted unchanged to the next level. Empty content is represented as a
//! single zero-length chunk so that every content has a root.

use std::fmt;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

pub const DIGEST_LEN: usize = 32;
/// Default chunk size: 256 KiB.
pub const DEFAULT_CHUNK_SIZE: usize = 256 * 1024;

const LEAF_PREFIX: u8 = 0x00;
const INTERIOR_PREFIX: u8 = 0x01;

#[derive(Debug, Error, PartialEq, Eq)]
pub enum MerkleError {
    #[error("content is empty")]
    EmptyContent,
    #[error("leaf index {index} out of range ({leaves} leaves)")]
    IndexOutOfRange { index: usize, leaves: usize },
    #[error("malformed manifest: {0}")]
    MalformedManifest(&'static str),
    #[error("bad hex encoding")]
    BadHex,
}

/// Content identifier: a 32-octet hash, the same length no matter how large
/// the content is. Rendered lowercase hex everywhere.
#[derive(Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Cid([u8; DIGEST_LEN]);

impl Cid {
    pub fn from_digest(digest: [u8; DIGEST_LEN]) -> Self {
        Self(digest)
    }

    pub const fn zero() -> Self {
        Self([0u8; DIGEST_LEN])
    }

    pub fn as_bytes(&self) -> &[u8; DIGEST_LEN] {
        &self.0
    }

    pub fn to_hex(&self) -> String {
        hex::encode(self.0)
    }

    pub fn from_hex(s: &str) -> Result<Self, MerkleError> {
        let bytes: [u8; DIGEST_LEN] = hex::decode(s)
            .map_err(|_| MerkleError::BadHex)?
            .try_into()
            .map_err(|_| MerkleError::BadHex)?;
        Ok(Self(bytes))
    }
}

impl fmt::Display for Cid {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.to_hex())
    }
}

impl fmt::Debug for Cid {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.to_hex())
    }
}

impl Serialize for Cid {
    fn serialize<S: serde::Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        serializer.serialize_str(&self.to_hex())
    }
}

impl<'de> Deserialize<'de> for Cid {
    fn deserialize<D: serde::Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        let s = String::deserialize(deserializer)?;
        Cid::from_hex(&s).map_err(serde::de::Error::custom)
    }
}

/// Plain content identifier of raw data: sha256 of the octets.
pub fn cid(data: &[u8]) -> Cid {
    Cid(Sha256::digest(data).into())
}

/// Leaf digest of a chunk, in the leaf domain.
pub fn leaf_cid(chunk: &[u8]) -> Cid {
    let mut hasher = Sha256::new();
    hasher.update([LEAF_PREFIX]);
    hasher.update(chunk);
    Cid(hasher.finalize().into())
}

fn interior(left: &Cid, right: &Cid) -> Cid {
    let mut hasher = Sha256::new();
    hasher.update([INTERIOR_PREFIX]);
    hasher.update(left.0);
    hasher.update(right.0);
    Cid(hasher.finalize().into())
}

/// Split content into fixed-size chunks; the last chunk may be short.
/// Zero-length content is rejected here — the manifest layer represents it
/// as a single empty chunk instead.
pub fn chunk(content: &[u8], chunk_size: usize) -> Result<Vec<&[u8]>, MerkleError> {
    assert!(chunk_size >= 1, "chunk_size must be at least 1");
    if content.is_empty() {
        return Err(MerkleError::EmptyContent);
    }
    Ok(content.chunks(chunk_size).collect())
}

fn next_level(level: &[Cid]) -> Vec<Cid> {
    let mut up = Vec::with_capacity(level.len().div_ceil(2));
    for pair in level.chunks(2) {
        match pair {
            [l, r] => up.push(interior(l, r)),
            [odd] => up.push(*odd), // promoted unchanged
            _ => unreachable!(),
        }
    }
    up
}

/// Root of the tree over the given leaf digests.
pub fn root_from_leaves(leaves: &[Cid]) -> Cid {
    assert!(!leaves.is_empty(), "a tree needs at least one leaf");
    let mut level = leaves.to_vec();
    while level.len() > 1 {
        level = next_level(&level);
    }
    level[0]
}

/// DAG layout of one content: the root, the ordered chunk identifiers, and
/// the chunking geometry. The root is recomputable from the leaves alone.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DagManifest {
    pub root: Cid,
    pub chunk_size: u64,
    pub total_len: u64,
    #[serde(rename = "leaves")]
    pub leaf_cids: Vec<Cid>,
}

impl DagManifest {
    /// Build from already-split chunks.
    pub fn build(chunks: &[&[u8]], chunk_size: usize) -> Self {
        assert!(!chunks.is_empty(), "at least one chunk required");
        let leaf_cids: Vec<Cid> = chunks.iter().map(|c| leaf_cid(c)).collect();
        let root = root_from_leaves(&leaf_cids);
        DagManifest {
            root,
            chunk_size: chunk_size as u64,
            total_len: chunks.iter().map(|c| c.len() as u64).sum(),
            leaf_cids,
        }
    }

    /// Build for arbitrary content; empty content becomes a single
    /// zero-length chunk (total_len = 0, one leaf).
    pub fn for_content(content: &[u8], chunk_size: usize) -> Self {
        if content.is_empty() {
            Self::build(&[&[]], chunk_size)
        } else {
            let chunks = chunk(content, chunk_size).expect("non-empty content");
            Self::build(&chunks, chunk_size)
        }
    }

    pub fn leaf_count(&self) -> usize {
        self.leaf_cids.len()
    }

    /// Expected byte length of the chunk at `index`.
    pub fn chunk_len(&self, index: usize) -> usize {
        let full = self.chunk_size as usize;
        if index + 1 < self.leaf_count() {
            full
        } else {
            let rem = (self.total_len % self.chunk_size) as usize;
            if self.total_len == 0 {
                0
            } else if rem == 0 {
                full
            } else {
                rem
            }
        }
    }

    /// Structural invariants plus root recomputation. Applied to any manifest
    /// read from disk or received from an untrusted party.
    pub fn validate(&self) -> Result<(), MerkleError> {
        if self.leaf_cids.is_empty() {
            return Err(MerkleError::MalformedManifest("no leaves"));
        }
        if self.chunk_size == 0 {
            return Err(MerkleError::MalformedManifest("zero chunk size"));
        }
        let n = self.leaf_cids.len() as u64;
        if self.total_len > n * self.chunk_size {
            return Err(MerkleError::MalformedManifest("total_len too large"));
        }
        if n > 1 && self.total_len <= (n - 1) * self.chunk_size {
            return Err(MerkleError::MalformedManifest("trailing empty chunks"));
        }
        if root_from_leaves(&self.leaf_cids) != self.root {
            return Err(MerkleError::MalformedManifest("root mismatch"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Side {
    Left,
    Right,
}

/// One step of an inclusion path: the sibling digest and which side of the
/// running hash it sits on.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ProofStep {
    pub digest: Cid,
    pub side: Side,
}

/// Inclusion proof for one leaf. Path length is at most ceil(log2(leaves));
/// levels where the node was promoted contribute no step. The leaf count
/// pins the tree shape, which is what binds the path to its position.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct MerkleProof {
    pub leaf_index: u64,
    pub leaf_count: u64,
    pub path: Vec<ProofStep>,
}

/// Inclusion proof for the leaf at `leaf_index`.
pub fn prove(manifest: &DagManifest, leaf_index: usize) -> Result<MerkleProof, MerkleError> {
    if leaf_index >= manifest.leaf_count() {
        return Err(MerkleError::IndexOutOfRange {
            index: leaf_index,
            leaves: manifest.leaf_count(),
        });
    }
    let mut path = Vec::new();
    let mut level = manifest.leaf_cids.clone();
    let mut idx = leaf_index;
    while level.len() > 1 {
        if idx.is_multiple_of(2) {
            if idx + 1 < level.len() {
                path.push(ProofStep {
                    digest: level[idx + 1],
                    side: Side::Right,
                });
            }
            // else: promoted, no sibling at this level
        } else {
            path.push(ProofStep {
                digest: level[idx - 1],
                side: Side::Left,
            });
        }
        level = next_level(&level);
        idx /= 2;
    }
    Ok(MerkleProof {
        leaf_index: leaf_index as u64,
        leaf_count: manifest.leaf_count() as u64,
        path,
    })
}

/// Check a chunk against the anchored root. Pure function of its inputs;
/// returns false on any mismatch, never traps.
///
/// The claimed (leaf_index, leaf_count) fully determines the shape a genuine
/// path must have: an odd node pairs to its left, an even non-last node to
/// its right, and even last nodes of odd-sized levels are promoted without a
/// step. The walk enforces that exact shape while recomputing the root, so
/// within one tree a valid proof for one position cannot vouch for another.
///
/// The root does not commit to the leaf count (a promoted node is a direct
/// child of the root, indistinguishable from a leaf of a smaller tree), so
/// the claimed count itself is trusted here. Callers that know the true
/// count — every reader holds the manifest's leaf list — must check
/// `proof.leaf_count` against it.
pub fn verify(root: &Cid, chunk: &[u8], leaf_index: usize, proof: &MerkleProof) -> bool {
    if proof.leaf_index != leaf_index as u64 {
        return false;
    }
    let count = proof.leaf_count as usize;
    if count == 0 || leaf_index >= count {
        return false;
    }
    let mut acc = leaf_cid(chunk);
    let mut idx = leaf_index;
    let mut level_size = count;
    let mut steps = proof.path.iter();
    while level_size > 1 {
        if idx % 2 == 1 {
            let Some(step) = steps.next() else {
                return false;
            };
            if step.side != Side::Left {
                return false;
            }
            acc = interior(&step.digest, &acc);
        } else if idx < level_size - 1 {
            let Some(step) = steps.next() else {
                return false;
            };
            if step.side != Side::Right {
                return false;
            }
            acc = interior(&acc, &step.digest);
        }
        // idx == level_size - 1 with even idx: promoted, no step.
        idx /= 2;
        level_size = level_size.div_ceil(2);
    }
    steps.next().is_none() && acc == *root
}
