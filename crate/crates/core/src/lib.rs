//! Deterministic, desk-scale simulation of an encrypted decentralized content
//! network: owners encrypt and shard content across simulated storage miners
//! under Merkle-DAG content addressing, split the decryption key with
//! threshold secret sharing, and gate every read through an on-ledger access
//! control contract.
//!
//! Everything runs in-process on a single logical thread. All randomness comes
//! from one seeded source, so identical seeds reproduce identical networks,
//! ledgers, and placements bit for bit.

pub mod acc;
pub mod canonical;
pub mod crypto;
pub mod ledger;
pub mod merkle;
pub mod protocol;
pub mod rng;
pub mod scenario;
pub mod shamir;
pub mod storage;

pub use acc::{AccCall, AccOutput, AccessDecision, AccessGrant, DenyReason, Policy, Role};
pub use crypto::{Address, Ciphertext, KeyPair, Signature, SymmetricKey};
pub use ledger::{Block, Ledger, Payload, Receipt, Transaction, TxStatus};
pub use merkle::{Cid, DagManifest, MerkleProof};
pub use protocol::{ContentRecord, FetchOutcome, FetchReport, PublishParams, Simulation};
pub use rng::SeededRng;
pub use shamir::KeyShare;
pub use storage::{Behavior, MinerRecord, PlacementPlan, StorageNet, TrustedNodeBaseline};
