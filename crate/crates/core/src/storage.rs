//! Simulated decentralized storage network: miner nodes holding encrypted
//! shards and key shares off-chain, with replication placement, per-miner
//! behavior injection, and byte-exact storage accounting — plus the
//! trusted-node baseline used for cost comparisons.
//!
//! Behavior only ever affects responses, never stored bytes: a tampering
//! miner serves corrupted data while keeping the genuine bytes on disk, and
//! an offline miner simply does not answer.

use std::collections::BTreeMap;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::crypto::{self, Address, KeyPair, Signature};
use crate::merkle::{self, Cid, DagManifest, MerkleProof};
use crate::shamir::KeyShare;

const DELETE_AUTH_TAG: &[u8] = b"dosn.delete-key-share.v1";

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum StorageError {
    #[error("unknown miner {0}")]
    UnknownMiner(Address),
    #[error("not enough miners: need {needed}, have {available}")]
    NotEnoughMiners { needed: usize, available: usize },
    #[error("not stored")]
    NotStored,
    #[error("bad deletion authorization")]
    BadAuthorization,
}

#[derive(Debug, Error, Clone, Copy, PartialEq, Eq)]
pub enum RetrieveError {
    /// Miner did not answer (offline).
    #[error("miner unavailable")]
    Unavailable,
    #[error("not stored on this miner")]
    NotStored,
}

/// How a miner answers requests. Honest miners serve genuine bytes; tampering
/// miners flip one bit (or one share octet) per response; offline miners do
/// not respond at all.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Behavior {
    #[default]
    Honest,
    Tamper,
    Offline,
}

impl std::str::FromStr for Behavior {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "honest" => Ok(Behavior::Honest),
            "tamper" => Ok(Behavior::Tamper),
            "offline" => Ok(Behavior::Offline),
            other => Err(format!("unknown behavior `{other}`")),
        }
    }
}

/// A key share held by a miner, remembering which owner stored it so that
/// only owner-signed requests can erase it.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct StoredKeyShare {
    pub owner: Address,
    pub share: KeyShare,
}

/// One storage node's off-chain holdings and its injected behavior.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct MinerRecord {
    pub address: Address,
    /// Deduplicated shard bytes by content identifier.
    #[serde(with = "hex_shards")]
    pub shards: BTreeMap<Cid, Vec<u8>>,
    /// DAG manifests of contents this miner serves, so it can produce
    /// inclusion proofs alongside shard bytes. Metadata — not accounted.
    pub manifests: BTreeMap<String, DagManifest>,
    /// Key shares by content id; at most one share of a content per miner.
    pub key_shares: BTreeMap<String, StoredKeyShare>,
    pub behavior: Behavior,
    /// Sum of stored shard and share lengths, maintained incrementally.
    pub bytes_stored: u64,
    pub shard_requests: u64,
    pub share_requests: u64,
}

/// Shard bytes as lowercase hex inside miner state files.
mod hex_shards {
    use super::*;
    use serde::ser::SerializeMap;

    pub fn serialize<S: serde::Serializer>(
        shards: &BTreeMap<Cid, Vec<u8>>,
        serializer: S,
    ) -> Result<S::Ok, S::Error> {
        let mut map = serializer.serialize_map(Some(shards.len()))?;
        for (cid, bytes) in shards {
            map.serialize_entry(&cid.to_hex(), &hex::encode(bytes))?;
        }
        map.end()
    }

    pub fn deserialize<'de, D: serde::Deserializer<'de>>(
        deserializer: D,
    ) -> Result<BTreeMap<Cid, Vec<u8>>, D::Error> {
        let raw = BTreeMap::<String, String>::deserialize(deserializer)?;
        raw.into_iter()
            .map(|(k, v)| {
                Ok((
                    Cid::from_hex(&k).map_err(serde::de::Error::custom)?,
                    hex::decode(&v).map_err(serde::de::Error::custom)?,
                ))
            })
            .collect()
    }
}

impl MinerRecord {
    fn new(address: Address) -> Self {
        Self {
            address,
            shards: BTreeMap::new(),
            manifests: BTreeMap::new(),
            key_shares: BTreeMap::new(),
            behavior: Behavior::Honest,
            bytes_stored: 0,
            shard_requests: 0,
            share_requests: 0,
        }
    }
}

/// Where every shard replica and every key share of one content goes.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PlacementPlan {
    /// Each unique shard to `r` distinct miners, in retrieval-preference
    /// order.
    pub shard_locations: BTreeMap<Cid, Vec<Address>>,
    /// Share x-index to the single miner holding it.
    pub share_assignment: Vec<(u8, Address)>,
}

/// Deterministic placement: shards round-robin over a seed-shuffled miner
/// order, shares to the first `n_shares` distinct miners of that order.
pub fn place(
    leaf_cids: &[Cid],
    n_shares: u8,
    replication: usize,
    miners: &[Address],
    seed: u64,
) -> Result<PlacementPlan, StorageError> {
    let needed = replication.max(n_shares as usize);
    if miners.len() < needed {
        return Err(StorageError::NotEnoughMiners {
            needed,
            available: miners.len(),
        });
    }

    let mut order = miners.to_vec();
    order.shuffle(&mut ChaCha20Rng::seed_from_u64(seed));

    let mut shard_locations: BTreeMap<Cid, Vec<Address>> = BTreeMap::new();
    let mut cursor = 0usize;
    for cid in leaf_cids {
        if shard_locations.contains_key(cid) {
            continue; // duplicate chunk within the content
        }
        let replicas: Vec<Address> = (0..replication)
            .map(|k| order[(cursor + k) % order.len()])
            .collect();
        cursor = (cursor + replication) % order.len();
        shard_locations.insert(*cid, replicas);
    }

    let share_assignment = (1..=n_shares).map(|x| (x, order[(x - 1) as usize])).collect();

    Ok(PlacementPlan {
        shard_locations,
        share_assignment,
    })
}

/// Aggregated accounting, per miner and in total.
#[derive(Debug, Clone, Serialize)]
pub struct NetStats {
    pub miners: Vec<MinerStats>,
    pub total_bytes: u64,
    pub total_requests: u64,
}

#[derive(Debug, Clone, Serialize)]
pub struct MinerStats {
    pub address: Address,
    pub behavior: Behavior,
    pub shard_count: usize,
    pub share_count: usize,
    pub bytes_stored: u64,
    pub shard_requests: u64,
    pub share_requests: u64,
}

/// The miner set. All state is in-memory and mutated single-threaded; the
/// borrow checker serializes access.
#[derive(Debug, Clone, Default)]
pub struct StorageNet {
    miners: BTreeMap<Address, MinerRecord>,
}

impl StorageNet {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn register(&mut self, address: Address) {
        self.miners
            .entry(address)
            .or_insert_with(|| MinerRecord::new(address));
    }

    pub fn insert_record(&mut self, record: MinerRecord) {
        self.miners.insert(record.address, record);
    }

    pub fn miner(&self, address: &Address) -> Option<&MinerRecord> {
        self.miners.get(address)
    }

    pub fn miner_count(&self) -> usize {
        self.miners.len()
    }

    /// Registered miner addresses in sorted (deterministic) order.
    pub fn addresses(&self) -> Vec<Address> {
        self.miners.keys().copied().collect()
    }

    pub fn records(&self) -> impl Iterator<Item = &MinerRecord> {
        self.miners.values()
    }

    pub fn set_behavior(&mut self, address: &Address, behavior: Behavior) -> Result<(), StorageError> {
        self.miner_mut(address)?.behavior = behavior;
        Ok(())
    }

    fn miner_mut(&mut self, address: &Address) -> Result<&mut MinerRecord, StorageError> {
        self.miners
            .get_mut(address)
            .ok_or(StorageError::UnknownMiner(*address))
    }

    /// Store shard bytes under their content identifier. Re-storing an
    /// already-held cid is a no-op and does not double-count (deduplication).
    /// Returns whether the bytes were newly stored.
    pub fn store_shard(
        &mut self,
        miner: &Address,
        cid: &Cid,
        bytes: &[u8],
    ) -> Result<bool, StorageError> {
        let record = self.miner_mut(miner)?;
        if record.shards.contains_key(cid) {
            return Ok(false);
        }
        record.bytes_stored += bytes.len() as u64;
        record.shards.insert(*cid, bytes.to_vec());
        Ok(true)
    }

    /// Give a miner the DAG layout of a content so it can serve proofs.
    /// Manifests are metadata and do not count toward stored bytes.
    pub fn store_manifest(
        &mut self,
        miner: &Address,
        content_id: &str,
        manifest: &DagManifest,
    ) -> Result<(), StorageError> {
        self.miner_mut(miner)?
            .manifests
            .insert(content_id.to_string(), manifest.clone());
        Ok(())
    }

    pub fn store_key_share(
        &mut self,
        miner: &Address,
        owner: &Address,
        share: KeyShare,
    ) -> Result<(), StorageError> {
        let record = self.miner_mut(miner)?;
        let content_id = share.content_id.clone();
        if let Some(old) = record.key_shares.remove(&content_id) {
            record.bytes_stored -= old.share.y.len() as u64;
        }
        record.bytes_stored += share.y.len() as u64;
        record.key_shares.insert(
            content_id,
            StoredKeyShare {
                owner: *owner,
                share,
            },
        );
        Ok(())
    }

    /// Ask a miner for one shard of a content, with its inclusion proof.
    /// The answer depends on the miner's behavior; a tampering miner returns
    /// the stored bytes with a single deterministic bit flipped and the
    /// original proof.
    pub fn retrieve_shard(
        &mut self,
        miner: &Address,
        content_id: &str,
        leaf_index: usize,
    ) -> Result<(Vec<u8>, MerkleProof), RetrieveError> {
        let Some(record) = self.miners.get_mut(miner) else {
            return Err(RetrieveError::NotStored);
        };
        record.shard_requests += 1;
        if record.behavior == Behavior::Offline {
            return Err(RetrieveError::Unavailable);
        }
        let manifest = record
            .manifests
            .get(content_id)
            .ok_or(RetrieveError::NotStored)?;
        let cid = *manifest
            .leaf_cids
            .get(leaf_index)
            .ok_or(RetrieveError::NotStored)?;
        let bytes = record.shards.get(&cid).ok_or(RetrieveError::NotStored)?;
        let proof = merkle::prove(manifest, leaf_index).expect("index checked above");
        let bytes = match record.behavior {
            Behavior::Honest => bytes.clone(),
            Behavior::Tamper => corrupt_shard(bytes, content_id, leaf_index),
            Behavior::Offline => unreachable!(),
        };
        Ok((bytes, proof))
    }

    pub fn retrieve_key_share(
        &mut self,
        miner: &Address,
        content_id: &str,
    ) -> Result<KeyShare, RetrieveError> {
        let Some(record) = self.miners.get_mut(miner) else {
            return Err(RetrieveError::NotStored);
        };
        record.share_requests += 1;
        if record.behavior == Behavior::Offline {
            return Err(RetrieveError::Unavailable);
        }
        let stored = record
            .key_shares
            .get(content_id)
            .ok_or(RetrieveError::NotStored)?;
        let mut share = stored.share.clone();
        if record.behavior == Behavior::Tamper {
            corrupt_share(&mut share, content_id);
        }
        Ok(share)
    }

    /// Erase a key share. Requires an authorization signed by the owner who
    /// stored it; the accounting counter is decremented.
    pub fn delete_key_share(
        &mut self,
        miner: &Address,
        content_id: &str,
        auth: &DeleteAuthorization,
    ) -> Result<(), StorageError> {
        let record = self.miner_mut(miner)?;
        let stored = record.key_shares.get(content_id).ok_or(StorageError::NotStored)?;
        if auth.content_id != content_id || stored.owner != auth.owner || !auth.verify() {
            return Err(StorageError::BadAuthorization);
        }
        let removed = record.key_shares.remove(content_id).expect("present");
        record.bytes_stored -= removed.share.y.len() as u64;
        Ok(())
    }

    /// Compensating delete for publish rollback. Only shards recorded as
    /// newly stored by the failed publish may be passed here.
    pub(crate) fn rollback_shard(&mut self, miner: &Address, cid: &Cid) {
        if let Some(record) = self.miners.get_mut(miner) {
            if let Some(bytes) = record.shards.remove(cid) {
                record.bytes_stored -= bytes.len() as u64;
            }
        }
    }

    pub(crate) fn rollback_manifest(&mut self, miner: &Address, content_id: &str) {
        if let Some(record) = self.miners.get_mut(miner) {
            record.manifests.remove(content_id);
        }
    }

    pub(crate) fn rollback_key_share(&mut self, miner: &Address, content_id: &str) {
        if let Some(record) = self.miners.get_mut(miner) {
            if let Some(removed) = record.key_shares.remove(content_id) {
                record.bytes_stored -= removed.share.y.len() as u64;
            }
        }
    }

    pub fn total_bytes(&self) -> u64 {
        self.miners.values().map(|m| m.bytes_stored).sum()
    }

    pub fn total_requests(&self) -> u64 {
        self.miners
            .values()
            .map(|m| m.shard_requests + m.share_requests)
            .sum()
    }

    pub fn stats(&self) -> NetStats {
        let miners: Vec<MinerStats> = self
            .miners
            .values()
            .map(|m| MinerStats {
                address: m.address,
                behavior: m.behavior,
                shard_count: m.shards.len(),
                share_count: m.key_shares.len(),
                bytes_stored: m.bytes_stored,
                shard_requests: m.shard_requests,
                share_requests: m.share_requests,
            })
            .collect();
        NetStats {
            total_bytes: miners.iter().map(|m| m.bytes_stored).sum(),
            total_requests: miners.iter().map(|m| m.shard_requests + m.share_requests).sum(),
            miners,
        }
    }
}

/// Flip one deterministic bit of the shard bytes. A zero-length shard is
/// corrupted by extension, so even empty content cannot be tampered silently.
fn corrupt_shard(bytes: &[u8], content_id: &str, leaf_index: usize) -> Vec<u8> {
    if bytes.is_empty() {
        return vec![0x01];
    }
    let mut out = bytes.to_vec();
    let bit = tamper_offset(content_id, leaf_index) % (out.len() as u64 * 8);
    out[(bit / 8) as usize] ^= 1 << (bit % 8);
    out
}

/// Flip one deterministic octet of the share's y-vector. The share keeps its
/// metadata intact, so it still looks well-formed downstream.
fn corrupt_share(share: &mut KeyShare, content_id: &str) {
    let idx = (tamper_offset(content_id, share.x as usize) % share.y.len() as u64) as usize;
    share.y[idx] ^= 0xa5;
}

fn tamper_offset(content_id: &str, index: usize) -> u64 {
    let mut hasher = Sha256::new();
    hasher.update(b"dosn.tamper");
    hasher.update(content_id.as_bytes());
    hasher.update((index as u64).to_le_bytes());
    let digest = hasher.finalize();
    u64::from_le_bytes(digest[..8].try_into().unwrap())
}

/// Owner-signed permission to erase a key share, valid on any miner holding
/// one for the content.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DeleteAuthorization {
    pub owner: Address,
    pub content_id: String,
    pub signature: Signature,
}

impl DeleteAuthorization {
    pub fn sign(owner: &KeyPair, content_id: &str) -> Self {
        let signature = owner.sign(&Self::message(content_id));
        Self {
            owner: owner.address(),
            content_id: content_id.to_string(),
            signature,
        }
    }

    pub fn verify(&self) -> bool {
        crypto::verify(&self.owner, &Self::message(&self.content_id), &self.signature)
    }

    fn message(content_id: &str) -> Vec<u8> {
        let mut msg = DELETE_AUTH_TAG.to_vec();
        msg.extend_from_slice(content_id.as_bytes());
        msg
    }
}

/// The prior architecture's storage model: k designated trusted nodes, each
/// replicating every content in full plaintext. Exists for cost comparison
/// only.
#[derive(Debug, Clone)]
pub struct TrustedNodeBaseline {
    nodes: Vec<BaselineNode>,
}

#[derive(Debug, Clone, Default)]
struct BaselineNode {
    contents: BTreeMap<String, Vec<u8>>,
}

impl TrustedNodeBaseline {
    pub fn new(node_count: usize) -> Self {
        assert!(node_count >= 1, "at least one trusted node");
        Self {
            nodes: vec![BaselineNode::default(); node_count],
        }
    }

    pub fn node_count(&self) -> usize {
        self.nodes.len()
    }

    /// Every node stores the full plaintext.
    pub fn store(&mut self, content_id: &str, bytes: &[u8]) {
        for node in &mut self.nodes {
            node.contents.insert(content_id.to_string(), bytes.to_vec());
        }
    }

    pub fn total_bytes(&self) -> u64 {
        self.nodes
            .iter()
            .flat_map(|n| n.contents.values())
            .map(|c| c.len() as u64)
            .sum()
    }
}
