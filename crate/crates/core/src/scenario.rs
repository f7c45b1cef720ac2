//! JSON scenario files: declare miners, users, behaviors, and an operation
//! list; run the whole thing deterministically and emit a machine-readable
//! report.
//!
//! Contents are referenced by symbolic ids chosen in the scenario; the report
//! maps them to the real content identifiers assigned at publish time.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::acc::Role;
use crate::crypto::{Address, KeyPair};
use crate::merkle::DEFAULT_CHUNK_SIZE;
use crate::protocol::{FetchOutcome, ProtocolError, PublishParams, Simulation};
use crate::storage::Behavior;

#[derive(Debug, Error)]
pub enum ScenarioError {
    #[error("unknown user `{0}`")]
    UnknownUser(String),
    #[error("unknown miner `{0}`")]
    UnknownMiner(String),
    #[error("unknown content ref `{0}`")]
    UnknownContentRef(String),
    #[error("duplicate content ref `{0}`")]
    DuplicateContentRef(String),
    #[error("invalid role: {0}")]
    InvalidRole(String),
    #[error("operation {index} ({op}) failed: {source}")]
    OpFailed {
        index: usize,
        op: String,
        source: ProtocolError,
    },
    #[error(transparent)]
    Storage(#[from] crate::storage::StorageError),
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Scenario {
    pub seed: u64,
    pub miners: Vec<MinerSpec>,
    pub users: Vec<String>,
    pub operations: Vec<OpSpec>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct MinerSpec {
    pub name: String,
    #[serde(default)]
    pub behavior: Behavior,
}

/// Content payload for a publish op: inline text, inline hex, or `size`
/// random bytes drawn from the simulation's seeded source.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(untagged)]
pub enum ContentSource {
    Text { text: String },
    Hex { hex: String },
    Random { size: usize },
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "op", rename_all = "snake_case")]
pub enum OpSpec {
    Publish {
        owner: String,
        /// Symbolic id the rest of the scenario uses for this content.
        id: String,
        #[serde(flatten)]
        content: ContentSource,
        #[serde(default = "default_threshold")]
        t: u8,
        #[serde(default = "default_shares")]
        n: u8,
        #[serde(default = "default_replication")]
        r: usize,
        #[serde(default = "default_chunk_size")]
        chunk_size: usize,
        #[serde(default)]
        acl: BTreeMap<String, String>,
        #[serde(default)]
        allow: Vec<String>,
    },
    SetBehavior {
        miner: String,
        behavior: Behavior,
    },
    Grant {
        owner: String,
        content: String,
        user: String,
        role: String,
    },
    Revoke {
        owner: String,
        content: String,
    },
    Fetch {
        user: String,
        content: String,
    },
    Forget {
        owner: String,
        content: String,
    },
    DeleteAcc {
        owner: String,
    },
    Stats,
}

fn default_threshold() -> u8 {
    3
}
fn default_shares() -> u8 {
    5
}
fn default_replication() -> usize {
    2
}
fn default_chunk_size() -> usize {
    DEFAULT_CHUNK_SIZE
}

/// Per-operation result entry in the report.
#[derive(Debug, Clone, Serialize)]
#[serde(tag = "result", rename_all = "snake_case")]
pub enum OpResult {
    Published {
        id: String,
        content_id: String,
        policy_id: u64,
        leaf_count: usize,
    },
    BehaviorSet,
    Granted,
    Revoked,
    Fetched {
        outcome: String,
        bytes_len: usize,
    },
    Forgotten,
    AccDeleted,
    Stats {
        total_bytes: u64,
        total_requests: u64,
    },
}

#[derive(Debug, Clone, Serialize)]
pub struct OpReport {
    pub index: usize,
    pub op: String,
    #[serde(flatten)]
    pub result: OpResult,
    /// Miners whose responses failed verification during a fetch.
    #[serde(skip_serializing_if = "Vec::is_empty")]
    pub suspects: Vec<String>,
}

#[derive(Debug, Clone, Serialize)]
pub struct Report {
    pub seed: u64,
    pub operations: Vec<OpReport>,
    /// Symbolic content id to real content id.
    pub contents: BTreeMap<String, String>,
    pub ledger_state_digest: String,
    pub ledger_height: u64,
    pub total_bytes: u64,
}

/// Execute a scenario from scratch and produce its report.
pub fn run(scenario: &Scenario) -> Result<Report, ScenarioError> {
    let mut sim = Simulation::new(scenario.seed);

    let mut miner_addr: BTreeMap<String, Address> = BTreeMap::new();
    let mut addr_miner: BTreeMap<Address, String> = BTreeMap::new();
    for spec in &scenario.miners {
        let addr = sim.add_miner();
        sim.storage.set_behavior(&addr, spec.behavior)?;
        miner_addr.insert(spec.name.clone(), addr);
        addr_miner.insert(addr, spec.name.clone());
    }
    let mut users: BTreeMap<String, KeyPair> = BTreeMap::new();
    for name in &scenario.users {
        users.insert(name.clone(), sim.generate_keypair());
    }
    let mut content_ids: BTreeMap<String, String> = BTreeMap::new();

    let user = |users: &BTreeMap<String, KeyPair>, name: &str| -> Result<KeyPair, ScenarioError> {
        users
            .get(name)
            .cloned()
            .ok_or_else(|| ScenarioError::UnknownUser(name.to_string()))
    };
    let role = |name: &str| Role::new(name).map_err(|e| ScenarioError::InvalidRole(e.to_string()));

    let mut reports = Vec::new();
    for (index, op) in scenario.operations.iter().enumerate() {
        let op_name = op_name(op);
        let fail = |source| ScenarioError::OpFailed {
            index,
            op: op_name.to_string(),
            source,
        };
        let mut suspects = Vec::new();
        let result = match op {
            OpSpec::Publish {
                owner,
                id,
                content,
                t,
                n,
                r,
                chunk_size,
                acl,
                allow,
            } => {
                if content_ids.contains_key(id) {
                    return Err(ScenarioError::DuplicateContentRef(id.clone()));
                }
                let owner_kp = user(&users, owner)?;
                let bytes = match content {
                    ContentSource::Text { text } => text.clone().into_bytes(),
                    ContentSource::Hex { hex } => hex::decode(hex)
                        .map_err(|_| ScenarioError::InvalidRole("bad hex content".into()))?,
                    ContentSource::Random { size } => {
                        let mut buf = vec![0u8; *size];
                        sim.rng_mut().fill(&mut buf);
                        buf
                    }
                };
                let mut acl_map = BTreeMap::new();
                for (member, role_name) in acl {
                    acl_map.insert(user(&users, member)?.address(), role(role_name)?);
                }
                let allowed = allow
                    .iter()
                    .map(|r| role(r))
                    .collect::<Result<_, _>>()?;
                let record = sim
                    .publish(
                        &owner_kp,
                        &bytes,
                        acl_map,
                        allowed,
                        PublishParams {
                            threshold: *t,
                            share_count: *n,
                            replication: *r,
                            chunk_size: *chunk_size,
                        },
                    )
                    .map_err(fail)?;
                content_ids.insert(id.clone(), record.content_id.clone());
                OpResult::Published {
                    id: id.clone(),
                    content_id: record.content_id,
                    policy_id: record.policy_id,
                    leaf_count: record.manifest.leaf_count(),
                }
            }
            OpSpec::SetBehavior { miner, behavior } => {
                let addr = miner_addr
                    .get(miner)
                    .ok_or_else(|| ScenarioError::UnknownMiner(miner.clone()))?;
                sim.storage.set_behavior(addr, *behavior)?;
                OpResult::BehaviorSet
            }
            OpSpec::Grant {
                owner,
                content,
                user: member,
                role: role_name,
            } => {
                let owner_kp = user(&users, owner)?;
                let member_addr = user(&users, member)?.address();
                let content_id = resolve(&content_ids, content)?;
                let policy = sim
                    .ledger
                    .state()
                    .contracts
                    .find_policy_by_content(&content_id)
                    .ok_or_else(|| ScenarioError::UnknownContentRef(content.clone()))?;
                let mut acl = policy.acl.clone();
                let mut allowed = policy.allowed_roles.clone();
                let policy_id = policy.policy_id;
                let new_role = role(role_name)?;
                acl.insert(member_addr, new_role.clone());
                allowed.insert(new_role);
                sim.update_policy(&owner_kp, policy_id, Some(acl), Some(allowed))
                    .map_err(fail)?;
                OpResult::Granted
            }
            OpSpec::Revoke { owner, content } => {
                let owner_kp = user(&users, owner)?;
                let content_id = resolve(&content_ids, content)?;
                let policy_id = sim
                    .ledger
                    .state()
                    .contracts
                    .find_policy_by_content(&content_id)
                    .ok_or_else(|| ScenarioError::UnknownContentRef(content.clone()))?
                    .policy_id;
                sim.revoke_policy(&owner_kp, policy_id).map_err(fail)?;
                OpResult::Revoked
            }
            OpSpec::Fetch { user: name, content } => {
                let kp = user(&users, name)?;
                let content_id = resolve(&content_ids, content)?;
                let report = sim.fetch(&kp, &content_id);
                suspects = report
                    .suspects
                    .iter()
                    .map(|a| addr_miner.get(a).cloned().unwrap_or_else(|| a.to_hex()))
                    .collect();
                match report.outcome {
                    FetchOutcome::Success(bytes) => OpResult::Fetched {
                        outcome: "success".into(),
                        bytes_len: bytes.len(),
                    },
                    FetchOutcome::Failure(f) => OpResult::Fetched {
                        outcome: format!("{f:?}"),
                        bytes_len: 0,
                    },
                }
            }
            OpSpec::Forget { owner, content } => {
                let owner_kp = user(&users, owner)?;
                let content_id = resolve(&content_ids, content)?;
                sim.forget(&owner_kp, &content_id).map_err(fail)?;
                OpResult::Forgotten
            }
            OpSpec::DeleteAcc { owner } => {
                let owner_kp = user(&users, owner)?;
                sim.delete_acc(&owner_kp).map_err(fail)?;
                OpResult::AccDeleted
            }
            OpSpec::Stats => OpResult::Stats {
                total_bytes: sim.storage.total_bytes(),
                total_requests: sim.storage.total_requests(),
            },
        };
        reports.push(OpReport {
            index,
            op: op_name.to_string(),
            result,
            suspects,
        });
    }

    Ok(Report {
        seed: scenario.seed,
        operations: reports,
        contents: content_ids,
        ledger_state_digest: sim.ledger.state_digest().to_hex(),
        ledger_height: sim.ledger.height(),
        total_bytes: sim.storage.total_bytes(),
    })
}

fn resolve(map: &BTreeMap<String, String>, key: &str) -> Result<String, ScenarioError> {
    map.get(key)
        .cloned()
        .ok_or_else(|| ScenarioError::UnknownContentRef(key.to_string()))
}

fn op_name(op: &OpSpec) -> &'static str {
    match op {
        OpSpec::Publish { .. } => "publish",
        OpSpec::SetBehavior { .. } => "set_behavior",
        OpSpec::Grant { .. } => "grant",
        OpSpec::Revoke { .. } => "revoke",
        OpSpec::Fetch { .. } => "fetch",
        OpSpec::Forget { .. } => "forget",
        OpSpec::DeleteAcc { .. } => "delete_acc",
        OpSpec::Stats => "stats",
    }
}
