//! The access control contract: per-owner policy state and its five
//! transitions — policy creation, update, revocation, access checking, and
//! contract deletion — with role-based resolution of requesters.
//!
//! Contract state only ever mutates inside the ledger's serialized submit
//! path. A denied access check is a normal decision value (and still lands on
//! the ledger for auditability); only calls against a deactivated contract or
//! structurally invalid payloads reject the transaction.

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::canonical::{CanonicalEncode, CanonicalWriter};
use crate::crypto::{Address, CipherMeta};
use crate::ledger::AnchorRecord;
use crate::merkle::Cid;

#[derive(Debug, Error, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub enum AccError {
    #[error("content root not anchored")]
    NotAnchored,
    #[error("sender is not the owner")]
    NotOwner,
    #[error("too few key holders: {holders} < threshold {threshold}")]
    TooFewKeyHolders { holders: usize, threshold: u8 },
    #[error("contract deactivated")]
    ContractDeactivated,
    #[error("unknown policy {0}")]
    UnknownPolicy(u64),
    #[error("policy {0} is revoked")]
    PolicyRevoked(u64),
    #[error("invalid policy payload: {0}")]
    InvalidPolicy(String),
}

/// Role label assigned to an address in an ACL. Nonempty, compared
/// case-sensitively.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub struct Role(String);

impl Role {
    pub fn new(name: impl Into<String>) -> Result<Self, AccError> {
        let name = name.into();
        if name.is_empty() {
            return Err(AccError::InvalidPolicy("empty role name".into()));
        }
        Ok(Role(name))
    }

    pub fn as_str(&self) -> &str {
        &self.0
    }
}

impl TryFrom<String> for Role {
    type Error = AccError;
    fn try_from(s: String) -> Result<Self, Self::Error> {
        Role::new(s)
    }
}

impl From<Role> for String {
    fn from(r: Role) -> String {
        r.0
    }
}

impl std::fmt::Display for Role {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.0)
    }
}

/// A miner holding one key share, identified by the share's x-index.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct KeyHolder {
    pub miner: Address,
    pub x: u8,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PolicyStatus {
    Active,
    Revoked,
}

/// Owner-defined access policy for one content.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Policy {
    pub policy_id: u64,
    pub owner: Address,
    pub content_id: String,
    pub acl: BTreeMap<Address, Role>,
    pub allowed_roles: BTreeSet<Role>,
    pub key_holders: Vec<KeyHolder>,
    pub leaf_cids: Vec<Cid>,
    pub threshold: u8,
    pub shard_locations: BTreeMap<Cid, Vec<Address>>,
    pub cipher: CipherMeta,
    pub status: PolicyStatus,
}

/// Everything a granted reader needs: where the shards and key shares live,
/// the anchored root to verify against, and the cipher envelope.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AccessGrant {
    pub content_id: String,
    pub root: Cid,
    pub leaf_cids: Vec<Cid>,
    pub shard_locations: BTreeMap<Cid, Vec<Address>>,
    pub key_holders: Vec<KeyHolder>,
    pub threshold: u8,
    pub cipher: CipherMeta,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum DenyReason {
    NoPolicy,
    NotInAcl,
    RoleNotAllowed,
    Revoked,
}

/// Outcome of an access check: a decision is data, not an error.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub enum AccessDecision {
    Granted(Box<AccessGrant>),
    Denied(DenyReason),
}

/// Contract calls, carried as transaction payloads.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "call", rename_all = "snake_case")]
pub enum AccCall {
    CreatePolicy {
        content_id: String,
        acl: BTreeMap<Address, Role>,
        allowed_roles: BTreeSet<Role>,
        key_holders: Vec<KeyHolder>,
        leaf_cids: Vec<Cid>,
        shard_locations: BTreeMap<Cid, Vec<Address>>,
        threshold: u8,
        cipher: CipherMeta,
    },
    UpdatePolicy {
        policy_id: u64,
        new_acl: Option<BTreeMap<Address, Role>>,
        new_allowed_roles: Option<BTreeSet<Role>>,
    },
    RevokePolicy {
        policy_id: u64,
    },
    CheckAccess {
        policy_id: u64,
    },
    DeleteAcc {
        owner: Address,
    },
}

/// What an accepted contract call returned.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub enum AccOutput {
    PolicyCreated { policy_id: u64 },
    PolicyUpdated,
    PolicyRevoked,
    Decision(AccessDecision),
    AccDeleted,
}

/// One owner's contract: their policies and the deactivation flag.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ContractState {
    pub policies: BTreeMap<u64, Policy>,
    pub deactivated: bool,
}

/// All contracts, one per owner, plus the global policy id sequence.
/// Policy ids are assigned sequentially starting at 1 and never reused.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Registry {
    contracts: BTreeMap<Address, ContractState>,
    policy_owner: BTreeMap<u64, Address>,
    next_policy_id: u64,
}

impl Default for Registry {
    fn default() -> Self {
        Self {
            contracts: BTreeMap::new(),
            policy_owner: BTreeMap::new(),
            next_policy_id: 1,
        }
    }
}

impl Registry {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn contract(&self, owner: &Address) -> Option<&ContractState> {
        self.contracts.get(owner)
    }

    pub fn policy(&self, policy_id: u64) -> Option<&Policy> {
        let owner = self.policy_owner.get(&policy_id)?;
        self.contracts.get(owner)?.policies.get(&policy_id)
    }

    /// Most recently created policy for a content id, if any.
    pub fn find_policy_by_content(&self, content_id: &str) -> Option<&Policy> {
        self.policy_owner
            .iter()
            .rev()
            .map(|(id, owner)| &self.contracts[owner].policies[id])
            .find(|p| p.content_id == content_id)
    }

    pub fn policies(&self) -> impl Iterator<Item = &Policy> {
        self.contracts.values().flat_map(|c| c.policies.values())
    }

    /// Apply one contract call on behalf of `sender`. Every validation runs
    /// before any mutation, so a rejected call leaves the registry untouched.
    pub fn apply(
        &mut self,
        sender: &Address,
        call: &AccCall,
        anchors: &BTreeMap<String, AnchorRecord>,
    ) -> Result<AccOutput, AccError> {
        match call {
            AccCall::CreatePolicy {
                content_id,
                acl,
                allowed_roles,
                key_holders,
                leaf_cids,
                shard_locations,
                threshold,
                cipher,
            } => {
                if self.contracts.get(sender).is_some_and(|c| c.deactivated) {
                    return Err(AccError::ContractDeactivated);
                }
                let anchor = anchors.get(content_id).ok_or(AccError::NotAnchored)?;
                if anchor.owner != *sender {
                    return Err(AccError::NotOwner);
                }
                if *threshold == 0 {
                    return Err(AccError::InvalidPolicy("zero threshold".into()));
                }
                if leaf_cids.is_empty() {
                    return Err(AccError::InvalidPolicy("no leaf cids".into()));
                }
                if key_holders.len() < *threshold as usize {
                    return Err(AccError::TooFewKeyHolders {
                        holders: key_holders.len(),
                        threshold: *threshold,
                    });
                }
                let mut miners: Vec<&Address> = key_holders.iter().map(|k| &k.miner).collect();
                miners.sort_unstable();
                miners.dedup();
                if miners.len() != key_holders.len() {
                    return Err(AccError::InvalidPolicy("duplicate key-holder miner".into()));
                }

                let policy_id = self.next_policy_id;
                self.next_policy_id += 1;
                let policy = Policy {
                    policy_id,
                    owner: *sender,
                    content_id: content_id.clone(),
                    acl: acl.clone(),
                    allowed_roles: allowed_roles.clone(),
                    key_holders: key_holders.clone(),
                    leaf_cids: leaf_cids.clone(),
                    threshold: *threshold,
                    shard_locations: shard_locations.clone(),
                    cipher: cipher.clone(),
                    status: PolicyStatus::Active,
                };
                self.contracts
                    .entry(*sender)
                    .or_default()
                    .policies
                    .insert(policy_id, policy);
                self.policy_owner.insert(policy_id, *sender);
                Ok(AccOutput::PolicyCreated { policy_id })
            }

            AccCall::UpdatePolicy {
                policy_id,
                new_acl,
                new_allowed_roles,
            } => {
                let policy = self.owned_active_policy(sender, *policy_id)?;
                if let Some(acl) = new_acl {
                    policy.acl = acl.clone();
                }
                if let Some(roles) = new_allowed_roles {
                    policy.allowed_roles = roles.clone();
                }
                Ok(AccOutput::PolicyUpdated)
            }

            AccCall::RevokePolicy { policy_id } => {
                let policy = self.owned_active_policy(sender, *policy_id)?;
                policy.status = PolicyStatus::Revoked;
                Ok(AccOutput::PolicyRevoked)
            }

            AccCall::CheckAccess { policy_id } => {
                let Some(owner) = self.policy_owner.get(policy_id) else {
                    return Ok(AccOutput::Decision(AccessDecision::Denied(
                        DenyReason::NoPolicy,
                    )));
                };
                let contract = &self.contracts[owner];
                if contract.deactivated {
                    return Err(AccError::ContractDeactivated);
                }
                let policy = &contract.policies[policy_id];
                let decision = Self::decide(policy, sender, anchors);
                Ok(AccOutput::Decision(decision))
            }

            AccCall::DeleteAcc { owner } => {
                if owner != sender {
                    return Err(AccError::NotOwner);
                }
                let contract = self.contracts.entry(*sender).or_default();
                if contract.deactivated {
                    return Err(AccError::ContractDeactivated);
                }
                contract.deactivated = true;
                Ok(AccOutput::AccDeleted)
            }
        }
    }

    /// Pure decision function: depends only on the policy state and the
    /// requester.
    fn decide(
        policy: &Policy,
        requester: &Address,
        anchors: &BTreeMap<String, AnchorRecord>,
    ) -> AccessDecision {
        if policy.status == PolicyStatus::Revoked {
            return AccessDecision::Denied(DenyReason::Revoked);
        }
        let Some(role) = policy.acl.get(requester) else {
            return AccessDecision::Denied(DenyReason::NotInAcl);
        };
        if !policy.allowed_roles.contains(role) {
            return AccessDecision::Denied(DenyReason::RoleNotAllowed);
        }
        let root = anchors
            .get(&policy.content_id)
            .map(|a| a.root)
            .unwrap_or_else(Cid::zero);
        AccessDecision::Granted(Box::new(AccessGrant {
            content_id: policy.content_id.clone(),
            root,
            leaf_cids: policy.leaf_cids.clone(),
            shard_locations: policy.shard_locations.clone(),
            key_holders: policy.key_holders.clone(),
            threshold: policy.threshold,
            cipher: policy.cipher.clone(),
        }))
    }

    fn owned_active_policy(
        &mut self,
        sender: &Address,
        policy_id: u64,
    ) -> Result<&mut Policy, AccError> {
        let owner = *self
            .policy_owner
            .get(&policy_id)
            .ok_or(AccError::UnknownPolicy(policy_id))?;
        let contract = self.contracts.get_mut(&owner).expect("indexed owner");
        if contract.deactivated {
            return Err(AccError::ContractDeactivated);
        }
        if owner != *sender {
            return Err(AccError::NotOwner);
        }
        let policy = contract.policies.get_mut(&policy_id).expect("indexed id");
        if policy.status == PolicyStatus::Revoked {
            return Err(AccError::PolicyRevoked(policy_id));
        }
        Ok(policy)
    }
}

impl CanonicalEncode for Policy {
    fn encode(&self, w: &mut CanonicalWriter) {
        w.put_u64(self.policy_id);
        w.put_fixed(self.owner.as_bytes());
        w.put_str(&self.content_id);
        w.put_u64(self.acl.len() as u64);
        for (addr, role) in &self.acl {
            w.put_fixed(addr.as_bytes());
            w.put_str(role.as_str());
        }
        w.put_u64(self.allowed_roles.len() as u64);
        for role in &self.allowed_roles {
            w.put_str(role.as_str());
        }
        w.put_u64(self.key_holders.len() as u64);
        for kh in &self.key_holders {
            w.put_fixed(kh.miner.as_bytes());
            w.put_u8(kh.x);
        }
        w.put_u64(self.leaf_cids.len() as u64);
        for cid in &self.leaf_cids {
            w.put_fixed(cid.as_bytes());
        }
        w.put_u8(self.threshold);
        w.put_u64(self.shard_locations.len() as u64);
        for (cid, miners) in &self.shard_locations {
            w.put_fixed(cid.as_bytes());
            w.put_u64(miners.len() as u64);
            for m in miners {
                w.put_fixed(m.as_bytes());
            }
        }
        w.put_fixed(&self.cipher.nonce);
        w.put_fixed(&self.cipher.tag);
        w.put_u8(match self.status {
            PolicyStatus::Active => 0,
            PolicyStatus::Revoked => 1,
        });
    }
}

impl CanonicalEncode for AccCall {
    fn encode(&self, w: &mut CanonicalWriter) {
        match self {
            AccCall::CreatePolicy {
                content_id,
                acl,
                allowed_roles,
                key_holders,
                leaf_cids,
                shard_locations,
                threshold,
                cipher,
            } => {
                w.put_u8(0);
                w.put_str(content_id);
                w.put_u64(acl.len() as u64);
                for (addr, role) in acl {
                    w.put_fixed(addr.as_bytes());
                    w.put_str(role.as_str());
                }
                w.put_u64(allowed_roles.len() as u64);
                for role in allowed_roles {
                    w.put_str(role.as_str());
                }
                w.put_u64(key_holders.len() as u64);
                for kh in key_holders {
                    w.put_fixed(kh.miner.as_bytes());
                    w.put_u8(kh.x);
                }
                w.put_u64(leaf_cids.len() as u64);
                for cid in leaf_cids {
                    w.put_fixed(cid.as_bytes());
                }
                w.put_u64(shard_locations.len() as u64);
                for (cid, miners) in shard_locations {
                    w.put_fixed(cid.as_bytes());
                    w.put_u64(miners.len() as u64);
                    for m in miners {
                        w.put_fixed(m.as_bytes());
                    }
                }
                w.put_u8(*threshold);
                w.put_fixed(&cipher.nonce);
                w.put_fixed(&cipher.tag);
            }
            AccCall::UpdatePolicy {
                policy_id,
                new_acl,
                new_allowed_roles,
            } => {
                w.put_u8(1);
                w.put_u64(*policy_id);
                match new_acl {
                    None => w.put_u8(0),
                    Some(acl) => {
                        w.put_u8(1);
                        w.put_u64(acl.len() as u64);
                        for (addr, role) in acl {
                            w.put_fixed(addr.as_bytes());
                            w.put_str(role.as_str());
                        }
                    }
                }
                match new_allowed_roles {
                    None => w.put_u8(0),
                    Some(roles) => {
                        w.put_u8(1);
                        w.put_u64(roles.len() as u64);
                        for role in roles {
                            w.put_str(role.as_str());
                        }
                    }
                }
            }
            AccCall::RevokePolicy { policy_id } => {
                w.put_u8(2);
                w.put_u64(*policy_id);
            }
            AccCall::CheckAccess { policy_id } => {
                w.put_u8(3);
                w.put_u64(*policy_id);
            }
            AccCall::DeleteAcc { owner } => {
                w.put_u8(4);
                w.put_fixed(owner.as_bytes());
            }
        }
    }
}

impl CanonicalEncode for Registry {
    fn encode(&self, w: &mut CanonicalWriter) {
        w.put_u64(self.next_policy_id);
        w.put_u64(self.contracts.len() as u64);
        for (owner, contract) in &self.contracts {
            w.put_fixed(owner.as_bytes());
            w.put_u8(contract.deactivated as u8);
            w.put_u64(contract.policies.len() as u64);
            for policy in contract.policies.values() {
                policy.encode(w);
            }
        }
    }
}
