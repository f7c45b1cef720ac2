//! Simulated single-writer blockchain: an append-only, signature-verified
//! transaction log grouped into blocks, hosting contract state transitions
//! and anchored Merkle roots.
//!
//! There is no consensus and no forking — submissions are serialized and
//! final the moment they are accepted. State is a pure fold over the
//! transaction log: replaying the blocks from genesis reproduces the live
//! state digest exactly. By default every accepted transaction seals its own
//! block; batching can be turned on for experiments.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::acc::{AccCall, AccError, AccOutput, Registry};
use crate::canonical::{CanonicalEncode, CanonicalWriter};
use crate::crypto::{self, Address, KeyPair, Signature};
use crate::merkle::Cid;

const TX_SIGNING_TAG: &str = "dosn.tx.v1";
const TX_DIGEST_TAG: &str = "dosn.tx-digest.v1";
const BLOCK_DIGEST_TAG: &str = "dosn.block.v1";
const STATE_DIGEST_TAG: &str = "dosn.state.v1";

#[derive(Debug, Error, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub enum RejectReason {
    #[error("bad signature")]
    BadSignature,
    #[error("bad nonce: expected {expected}, got {got}")]
    BadNonce { expected: u64, got: u64 },
    #[error("content already anchored: {0}")]
    DuplicateContent(String),
    #[error("contract rejected: {0}")]
    ContractRejected(AccError),
}

impl From<AccError> for RejectReason {
    fn from(e: AccError) -> Self {
        RejectReason::ContractRejected(e)
    }
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum ChainError {
    #[error("chain is empty")]
    EmptyChain,
    #[error("bad genesis block")]
    BadGenesis,
    #[error("height gap at block {expected}")]
    HeightGap { expected: u64 },
    #[error("parent digest mismatch at height {height}")]
    ParentMismatch { height: u64 },
    #[error("block digest mismatch at height {height}")]
    DigestMismatch { height: u64 },
    #[error("invalid transaction in block {height}: {reason}")]
    BadTransaction { height: u64, reason: RejectReason },
}

/// What a transaction does: anchor a content root, or call the access
/// contract.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Payload {
    AnchorRoot { content_id: String, root: Cid },
    Acc(AccCall),
}

impl CanonicalEncode for Payload {
    fn encode(&self, w: &mut CanonicalWriter) {
        match self {
            Payload::AnchorRoot { content_id, root } => {
                w.put_u8(0);
                w.put_str(content_id);
                w.put_fixed(root.as_bytes());
            }
            Payload::Acc(call) => {
                w.put_u8(1);
                call.encode(w);
            }
        }
    }
}

/// Signed ledger entry. The signature covers the canonical serialization of
/// (sender, nonce, payload) under a domain tag.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Transaction {
    pub sender: Address,
    pub nonce: u64,
    pub payload: Payload,
    pub signature: Signature,
}

impl Transaction {
    pub fn sign(keypair: &KeyPair, nonce: u64, payload: Payload) -> Self {
        let sender = keypair.address();
        let message = Self::signing_bytes(&sender, nonce, &payload);
        let signature = keypair.sign(&message);
        Self {
            sender,
            nonce,
            payload,
            signature,
        }
    }

    fn signing_bytes(sender: &Address, nonce: u64, payload: &Payload) -> Vec<u8> {
        let mut w = CanonicalWriter::tagged(TX_SIGNING_TAG);
        w.put_fixed(sender.as_bytes());
        w.put_u64(nonce);
        payload.encode(&mut w);
        w.finish()
    }

    pub fn verify_signature(&self) -> bool {
        let message = Self::signing_bytes(&self.sender, self.nonce, &self.payload);
        crypto::verify(&self.sender, &message, &self.signature)
    }

    pub fn digest(&self) -> Cid {
        let mut w = CanonicalWriter::tagged(TX_DIGEST_TAG);
        self.encode(&mut w);
        w.digest()
    }
}

impl CanonicalEncode for Transaction {
    fn encode(&self, w: &mut CanonicalWriter) {
        w.put_fixed(self.sender.as_bytes());
        w.put_u64(self.nonce);
        self.payload.encode(w);
        w.put_fixed(self.signature.as_bytes());
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Block {
    pub height: u64,
    pub parent_digest: Cid,
    pub transactions: Vec<Transaction>,
    pub digest: Cid,
}

impl Block {
    pub fn compute_digest(height: u64, parent: &Cid, transactions: &[Transaction]) -> Cid {
        let mut w = CanonicalWriter::tagged(BLOCK_DIGEST_TAG);
        w.put_u64(height);
        w.put_fixed(parent.as_bytes());
        w.put_u64(transactions.len() as u64);
        for tx in transactions {
            tx.encode(&mut w);
        }
        w.digest()
    }

    pub fn genesis() -> Self {
        let parent = Cid::zero();
        let digest = Self::compute_digest(0, &parent, &[]);
        Block {
            height: 0,
            parent_digest: parent,
            transactions: Vec::new(),
            digest,
        }
    }

    /// Recompute the digest from the contents and compare with the stored
    /// one.
    pub fn digest_is_consistent(&self) -> bool {
        Self::compute_digest(self.height, &self.parent_digest, &self.transactions) == self.digest
    }
}

/// On-chain record of a content root: who anchored it and the root itself.
/// Immutable once written.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AnchorRecord {
    pub owner: Address,
    pub root: Cid,
}

/// The materialized chain state: per-sender nonces, anchored roots, and the
/// access-contract registry.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct LedgerState {
    nonces: BTreeMap<Address, u64>,
    anchors: BTreeMap<String, AnchorRecord>,
    pub contracts: Registry,
}

impl LedgerState {
    pub fn anchors(&self) -> &BTreeMap<String, AnchorRecord> {
        &self.anchors
    }

    pub fn next_nonce(&self, sender: &Address) -> u64 {
        self.nonces.get(sender).map_or(1, |n| n + 1)
    }

    pub fn digest(&self) -> Cid {
        let mut w = CanonicalWriter::tagged(STATE_DIGEST_TAG);
        w.put_u64(self.nonces.len() as u64);
        for (addr, nonce) in &self.nonces {
            w.put_fixed(addr.as_bytes());
            w.put_u64(*nonce);
        }
        w.put_u64(self.anchors.len() as u64);
        for (content_id, anchor) in &self.anchors {
            w.put_str(content_id);
            w.put_fixed(anchor.owner.as_bytes());
            w.put_fixed(anchor.root.as_bytes());
        }
        self.contracts.encode(&mut w);
        w.digest()
    }

    /// Validate and apply one transaction. All checks run before any
    /// mutation; a rejected transaction leaves the state bit-identical.
    fn apply(&mut self, tx: &Transaction) -> Result<Option<AccOutput>, RejectReason> {
        if !tx.verify_signature() {
            return Err(RejectReason::BadSignature);
        }
        let expected = self.next_nonce(&tx.sender);
        if tx.nonce != expected {
            return Err(RejectReason::BadNonce {
                expected,
                got: tx.nonce,
            });
        }
        let output = match &tx.payload {
            Payload::AnchorRoot { content_id, root } => {
                if self.anchors.contains_key(content_id) {
                    return Err(RejectReason::DuplicateContent(content_id.clone()));
                }
                self.anchors.insert(
                    content_id.clone(),
                    AnchorRecord {
                        owner: tx.sender,
                        root: *root,
                    },
                );
                None
            }
            Payload::Acc(call) => Some(self.contracts.apply(&tx.sender, call, &self.anchors)?),
        };
        self.nonces.insert(tx.sender, tx.nonce);
        Ok(output)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub enum TxStatus {
    Accepted,
    Rejected(RejectReason),
}

/// Every submitted transaction yields exactly one receipt. For accepted
/// contract calls the receipt also carries the call's return value.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Receipt {
    pub tx_digest: Cid,
    pub height: u64,
    pub status: TxStatus,
    pub output: Option<AccOutput>,
}

impl Receipt {
    pub fn is_accepted(&self) -> bool {
        matches!(self.status, TxStatus::Accepted)
    }
}

/// The simulated chain. Writes are serialized through `submit`; committed
/// blocks are immutable.
#[derive(Debug, Clone)]
pub struct Ledger {
    blocks: Vec<Block>,
    pending: Vec<Transaction>,
    state: LedgerState,
    batch_size: usize,
}

impl Default for Ledger {
    fn default() -> Self {
        Self::new()
    }
}

impl Ledger {
    pub fn new() -> Self {
        Self::with_batch_size(1)
    }

    /// Group up to `batch_size` accepted transactions per block. The default
    /// of one block per transaction keeps scenarios exactly replayable step
    /// by step.
    pub fn with_batch_size(batch_size: usize) -> Self {
        assert!(batch_size >= 1, "batch size must be at least 1");
        Self {
            blocks: vec![Block::genesis()],
            pending: Vec::new(),
            state: LedgerState::default(),
            batch_size,
        }
    }

    pub fn submit(&mut self, tx: Transaction) -> Receipt {
        let tx_digest = tx.digest();
        match self.state.apply(&tx) {
            Ok(output) => {
                self.pending.push(tx);
                // Height the transaction will commit at.
                let height = self.blocks.len() as u64;
                if self.pending.len() >= self.batch_size {
                    self.seal_block();
                }
                Receipt {
                    tx_digest,
                    height,
                    status: TxStatus::Accepted,
                    output,
                }
            }
            Err(reason) => Receipt {
                tx_digest,
                height: self.tip().height,
                status: TxStatus::Rejected(reason),
                output: None,
            },
        }
    }

    /// Seal any pending transactions into a block (no-op when none pend).
    pub fn flush(&mut self) {
        if !self.pending.is_empty() {
            self.seal_block();
        }
    }

    fn seal_block(&mut self) {
        let height = self.blocks.len() as u64;
        let parent = self.tip().digest;
        let transactions = std::mem::take(&mut self.pending);
        let digest = Block::compute_digest(height, &parent, &transactions);
        self.blocks.push(Block {
            height,
            parent_digest: parent,
            transactions,
            digest,
        });
    }

    pub fn tip(&self) -> &Block {
        self.blocks.last().expect("genesis always present")
    }

    pub fn height(&self) -> u64 {
        self.tip().height
    }

    pub fn blocks(&self) -> &[Block] {
        &self.blocks
    }

    pub fn state(&self) -> &LedgerState {
        &self.state
    }

    pub fn state_digest(&self) -> Cid {
        self.state.digest()
    }

    pub fn next_nonce(&self, sender: &Address) -> u64 {
        self.state.next_nonce(sender)
    }

    pub fn get_root(&self, content_id: &str) -> Option<Cid> {
        self.state.anchors.get(content_id).map(|a| a.root)
    }

    pub fn anchor(&self, content_id: &str) -> Option<&AnchorRecord> {
        self.state.anchors.get(content_id)
    }

    /// Validate a full chain and rebuild its state from genesis. Any gap,
    /// broken parent link, digest mismatch, or invalid transaction fails.
    pub fn replay(blocks: &[Block]) -> Result<LedgerState, ChainError> {
        let Some(genesis) = blocks.first() else {
            return Err(ChainError::EmptyChain);
        };
        if *genesis != Block::genesis() {
            return Err(ChainError::BadGenesis);
        }
        let mut state = LedgerState::default();
        let mut parent = genesis.digest;
        for (i, block) in blocks.iter().enumerate().skip(1) {
            if block.height != i as u64 {
                return Err(ChainError::HeightGap { expected: i as u64 });
            }
            if block.parent_digest != parent {
                return Err(ChainError::ParentMismatch {
                    height: block.height,
                });
            }
            if !block.digest_is_consistent() {
                return Err(ChainError::DigestMismatch {
                    height: block.height,
                });
            }
            for tx in &block.transactions {
                state.apply(tx).map_err(|reason| ChainError::BadTransaction {
                    height: block.height,
                    reason,
                })?;
            }
            parent = block.digest;
        }
        Ok(state)
    }

    /// Rebuild a ledger from committed blocks (workspace reload).
    pub fn from_blocks(blocks: Vec<Block>, batch_size: usize) -> Result<Self, ChainError> {
        let state = Self::replay(&blocks)?;
        Ok(Self {
            blocks,
            pending: Vec::new(),
            state,
            batch_size,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::SeededRng;

    fn keypair(seed: u64) -> KeyPair {
        KeyPair::generate(&mut SeededRng::from_seed(seed))
    }

    fn anchor_tx(kp: &KeyPair, nonce: u64, content_id: &str, fill: u8) -> Transaction {
        Transaction::sign(
            kp,
            nonce,
            Payload::AnchorRoot {
                content_id: content_id.into(),
                root: Cid::from_digest([fill; 32]),
            },
        )
    }

    #[test]
    fn first_valid_tx_lands_at_height_one() {
        let mut ledger = Ledger::new();
        assert_eq!(ledger.height(), 0);
        let alice = keypair(1);
        let receipt = ledger.submit(anchor_tx(&alice, 1, "c1", 0xaa));
        assert!(receipt.is_accepted());
        assert_eq!(receipt.height, 1);
        assert_eq!(ledger.height(), 1);
    }

    #[test]
    fn nonce_reuse_is_rejected_and_state_unchanged() {
        let mut ledger = Ledger::new();
        let alice = keypair(1);
        ledger.submit(anchor_tx(&alice, 1, "c1", 1));
        let digest = ledger.state_digest();

        let receipt = ledger.submit(anchor_tx(&alice, 1, "c2", 2));
        assert_eq!(
            receipt.status,
            TxStatus::Rejected(RejectReason::BadNonce {
                expected: 2,
                got: 1
            })
        );
        assert_eq!(ledger.state_digest(), digest);
        assert_eq!(ledger.height(), 1, "no block for a rejected tx");
    }

    #[test]
    fn foreign_signature_is_rejected() {
        let mut ledger = Ledger::new();
        let alice = keypair(1);
        let mallory = keypair(2);
        let mut tx = anchor_tx(&alice, 1, "c1", 1);
        tx.sender = mallory.address();
        let receipt = ledger.submit(tx);
        assert_eq!(receipt.status, TxStatus::Rejected(RejectReason::BadSignature));
    }

    #[test]
    fn anchor_once_then_duplicate_rejected() {
        let mut ledger = Ledger::new();
        let alice = keypair(1);
        ledger.submit(anchor_tx(&alice, 1, "c1", 7));
        assert_eq!(ledger.get_root("c1"), Some(Cid::from_digest([7; 32])));
        assert_eq!(ledger.get_root("nope"), None);

        let receipt = ledger.submit(anchor_tx(&alice, 2, "c1", 8));
        assert_eq!(
            receipt.status,
            TxStatus::Rejected(RejectReason::DuplicateContent("c1".into()))
        );
        assert_eq!(ledger.get_root("c1"), Some(Cid::from_digest([7; 32])));
    }

    #[test]
    fn replay_reproduces_live_state_digest() {
        let mut ledger = Ledger::new();
        let alice = keypair(1);
        let bob = keypair(2);
        ledger.submit(anchor_tx(&alice, 1, "c1", 1));
        ledger.submit(anchor_tx(&bob, 1, "c2", 2));
        ledger.submit(anchor_tx(&alice, 2, "c3", 3));

        let replayed = Ledger::replay(ledger.blocks()).unwrap();
        assert_eq!(replayed.digest(), ledger.state_digest());

        // Fresh empty ledger digests equal too.
        assert_eq!(
            Ledger::replay(Ledger::new().blocks()).unwrap().digest(),
            Ledger::new().state_digest()
        );
    }

    #[test]
    fn corruption_of_a_committed_block_breaks_the_chain() {
        let mut ledger = Ledger::new();
        let alice = keypair(1);
        ledger.submit(anchor_tx(&alice, 1, "c1", 1));
        ledger.submit(anchor_tx(&alice, 2, "c2", 2));

        // Tampering with a committed transaction invalidates the block digest.
        let mut blocks = ledger.blocks().to_vec();
        blocks[1].transactions[0].nonce = 99;
        assert_eq!(
            Ledger::replay(&blocks),
            Err(ChainError::DigestMismatch { height: 1 })
        );

        // "Fixing" the digest exposes the forged signature instead.
        blocks[1].digest =
            Block::compute_digest(1, &blocks[1].parent_digest, &blocks[1].transactions);
        assert_eq!(
            Ledger::replay(&blocks),
            Err(ChainError::BadTransaction {
                height: 1,
                reason: RejectReason::BadSignature
            })
        );

        // Splicing in an internally consistent block from another history
        // breaks the parent link of everything after it.
        let mut other = Ledger::new();
        other.submit(anchor_tx(&alice, 1, "different", 9));
        let mut blocks = ledger.blocks().to_vec();
        blocks[1] = other.blocks()[1].clone();
        assert_eq!(
            Ledger::replay(&blocks),
            Err(ChainError::ParentMismatch { height: 2 })
        );
    }

    #[test]
    fn batching_groups_transactions_per_block() {
        let mut ledger = Ledger::with_batch_size(3);
        let alice = keypair(1);
        ledger.submit(anchor_tx(&alice, 1, "c1", 1));
        ledger.submit(anchor_tx(&alice, 2, "c2", 2));
        assert_eq!(ledger.height(), 0, "still pending");
        ledger.submit(anchor_tx(&alice, 3, "c3", 3));
        assert_eq!(ledger.height(), 1);
        assert_eq!(ledger.blocks()[1].transactions.len(), 3);

        ledger.submit(anchor_tx(&alice, 4, "c4", 4));
        ledger.flush();
        assert_eq!(ledger.height(), 2);
        assert_eq!(Ledger::replay(ledger.blocks()).unwrap().digest(), ledger.state_digest());
    }

    #[test]
    fn identical_logs_yield_identical_digests() {
        let build = || {
            let mut ledger = Ledger::new();
            let alice = keypair(42);
            ledger.submit(anchor_tx(&alice, 1, "c1", 1));
            ledger.submit(anchor_tx(&alice, 2, "c2", 2));
            ledger
        };
        assert_eq!(build().state_digest(), build().state_digest());
        assert_eq!(build().tip().digest, build().tip().digest);
    }
}
