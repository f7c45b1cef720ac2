//! On-disk workspace: everything a command sequence needs to continue where
//! the previous process left off.
//!
//! Layout (format version 1):
//!   workspace.json   — seed, rng stream position, content records
//!   ledger.jsonl     — one block per line
//!   miners/<addr>.json
//!   users/<name>.json
//!
//! A lock file serializes workspace mutation across processes. Saving and
//! reloading round-trips: the reloaded simulation continues the exact same
//! random stream and ledger state.

use std::collections::BTreeMap;
use std::fs;
use std::io::{BufRead, BufReader, Write};
use std::path::{Path, PathBuf};

use anyhow::{anyhow, bail, Context, Result};
use serde::{Deserialize, Serialize};

use dosn_core::crypto::KeyPair;
use dosn_core::ledger::{Block, Ledger};
use dosn_core::protocol::{ContentRecord, Simulation};
use dosn_core::storage::{MinerRecord, StorageNet};

pub const FORMAT_VERSION: u32 = 1;
pub const WORKSPACE_ENV: &str = "DOSN_WORKSPACE";

#[derive(Debug, Serialize, Deserialize)]
struct WorkspaceFile {
    format_version: u32,
    seed: u64,
    /// ChaCha stream position in 32-bit words, resumed on load.
    rng_word_pos: u64,
    nonce_counter: u64,
    /// Miner display names by address (addresses key the state files).
    miner_names: BTreeMap<String, String>,
    contents: BTreeMap<String, ContentRecord>,
}

#[derive(Debug, Serialize, Deserialize)]
struct UserFile {
    name: String,
    address: String,
    signing_key: String,
}

pub struct Workspace {
    pub root: PathBuf,
    pub sim: Simulation,
    pub seed: u64,
    /// name -> address (hex) for miners.
    pub miner_names: BTreeMap<String, String>,
    _lock: Lock,
}

/// Default workspace directory: $DOSN_WORKSPACE or ./.dosn.
pub fn default_root() -> PathBuf {
    std::env::var_os(WORKSPACE_ENV)
        .map(PathBuf::from)
        .unwrap_or_else(|| PathBuf::from(".dosn"))
}

struct Lock {
    path: PathBuf,
}

impl Lock {
    fn acquire(root: &Path) -> Result<Self> {
        let path = root.join("workspace.lock");
        match fs::OpenOptions::new().write(true).create_new(true).open(&path) {
            Ok(mut f) => {
                let _ = writeln!(f, "{}", std::process::id());
                Ok(Lock { path })
            }
            Err(e) if e.kind() == std::io::ErrorKind::AlreadyExists => {
                bail!(
                    "workspace {} is locked by another process (remove {} if stale)",
                    root.display(),
                    path.display()
                )
            }
            Err(e) => Err(e).context("acquiring workspace lock"),
        }
    }
}

impl Drop for Lock {
    fn drop(&mut self) {
        let _ = fs::remove_file(&self.path);
    }
}

impl Workspace {
    /// Create a fresh workspace directory. Fails if one already exists here.
    pub fn init(root: &Path, seed: u64) -> Result<Self> {
        if root.join("workspace.json").exists() {
            bail!("workspace already initialized at {}", root.display());
        }
        fs::create_dir_all(root.join("miners"))?;
        fs::create_dir_all(root.join("users"))?;
        let lock = Lock::acquire(root)?;
        let ws = Workspace {
            root: root.to_path_buf(),
            sim: Simulation::new(seed),
            seed,
            miner_names: BTreeMap::new(),
            _lock: lock,
        };
        Ok(ws)
    }

    /// Load an existing workspace and resume its simulation.
    pub fn load(root: &Path) -> Result<Self> {
        let lock = Lock::acquire(root)?;
        let meta: WorkspaceFile = read_json(&root.join("workspace.json"))
            .with_context(|| format!("no workspace at {}", root.display()))?;
        if meta.format_version != FORMAT_VERSION {
            bail!("unsupported workspace format {}", meta.format_version);
        }

        let blocks = read_blocks(&root.join("ledger.jsonl"))?;
        let ledger = Ledger::from_blocks(blocks, 1)
            .map_err(|e| anyhow!("ledger verification failed: {e}"))?;

        let mut storage = StorageNet::new();
        for entry in fs::read_dir(root.join("miners"))? {
            let path = entry?.path();
            if path.extension().is_some_and(|e| e == "json") {
                let record: MinerRecord = read_json(&path)?;
                storage.insert_record(record);
            }
        }

        let sim = Simulation::resume(
            meta.seed,
            meta.rng_word_pos as u128,
            meta.nonce_counter,
            ledger,
            storage,
            meta.contents,
        );
        Ok(Workspace {
            root: root.to_path_buf(),
            sim,
            seed: meta.seed,
            miner_names: meta.miner_names,
            _lock: lock,
        })
    }

    /// Persist the whole state. Called once per mutating command.
    pub fn save(&self) -> Result<()> {
        let meta = WorkspaceFile {
            format_version: FORMAT_VERSION,
            seed: self.seed,
            rng_word_pos: u64::try_from(self.sim.rng_word_pos())
                .map_err(|_| anyhow!("rng stream position overflow"))?,
            nonce_counter: self.sim.nonce_counter(),
            miner_names: self.miner_names.clone(),
            contents: self
                .sim
                .contents()
                .map(|r| (r.content_id.clone(), r.clone()))
                .collect(),
        };
        write_json_atomic(&self.root.join("workspace.json"), &meta)?;

        let mut lines = String::new();
        for block in self.sim.ledger.blocks() {
            lines.push_str(&serde_json::to_string(block)?);
            lines.push('\n');
        }
        write_atomic(&self.root.join("ledger.jsonl"), lines.as_bytes())?;

        for record in self.sim.storage.records() {
            write_json_atomic(
                &self.root.join("miners").join(format!("{}.json", record.address)),
                record,
            )?;
        }
        Ok(())
    }

    pub fn user_exists(&self, name: &str) -> bool {
        self.user_path(name).exists()
    }

    /// Store a user keypair under users/<name>.json.
    pub fn save_user(&self, name: &str, keypair: &KeyPair) -> Result<()> {
        let path = self.user_path(name);
        if path.exists() {
            bail!("user `{name}` already exists");
        }
        write_json_atomic(
            &path,
            &UserFile {
                name: name.to_string(),
                address: keypair.address().to_hex(),
                signing_key: hex::encode(keypair.secret_bytes()),
            },
        )
    }

    pub fn load_user(&self, name: &str) -> Result<KeyPair> {
        let file: UserFile = read_json(&self.user_path(name))
            .with_context(|| format!("unknown user `{name}`"))?;
        let bytes = hex::decode(&file.signing_key).context("corrupt user key")?;
        let kp = KeyPair::from_secret_bytes(&bytes).map_err(|e| anyhow!("{e}"))?;
        if kp.address().to_hex() != file.address {
            bail!("user file for `{name}` is inconsistent");
        }
        Ok(kp)
    }

    pub fn user_names(&self) -> Result<Vec<String>> {
        let mut names = Vec::new();
        for entry in fs::read_dir(self.root.join("users"))? {
            let path = entry?.path();
            if path.extension().is_some_and(|e| e == "json") {
                if let Some(stem) = path.file_stem().and_then(|s| s.to_str()) {
                    names.push(stem.to_string());
                }
            }
        }
        names.sort();
        Ok(names)
    }

    fn user_path(&self, name: &str) -> PathBuf {
        self.root.join("users").join(format!("{name}.json"))
    }

    /// Resolve a miner by name or address hex.
    pub fn resolve_miner(&self, name_or_addr: &str) -> Result<dosn_core::crypto::Address> {
        let hex_addr = self
            .miner_names
            .get(name_or_addr)
            .cloned()
            .unwrap_or_else(|| name_or_addr.to_string());
        dosn_core::crypto::Address::from_hex(&hex_addr)
            .map_err(|_| anyhow!("unknown miner `{name_or_addr}`"))
    }

    /// Display name of a miner address, falling back to the hex.
    pub fn miner_display(&self, addr: &dosn_core::crypto::Address) -> String {
        let hex = addr.to_hex();
        self.miner_names
            .iter()
            .find(|(_, a)| **a == hex)
            .map(|(n, _)| n.clone())
            .unwrap_or(hex)
    }
}

pub fn read_blocks(path: &Path) -> Result<Vec<Block>> {
    let file = fs::File::open(path).with_context(|| format!("opening {}", path.display()))?;
    let mut blocks = Vec::new();
    for (i, line) in BufReader::new(file).lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        blocks.push(
            serde_json::from_str(&line)
                .with_context(|| format!("ledger line {} is corrupt", i + 1))?,
        );
    }
    Ok(blocks)
}

fn read_json<T: serde::de::DeserializeOwned>(path: &Path) -> Result<T> {
    let data = fs::read(path).with_context(|| format!("reading {}", path.display()))?;
    serde_json::from_slice(&data).with_context(|| format!("parsing {}", path.display()))
}

fn write_json_atomic<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    write_atomic(path, &serde_json::to_vec_pretty(value)?)
}

fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let tmp = path.with_extension("tmp");
    fs::write(&tmp, bytes).with_context(|| format!("writing {}", tmp.display()))?;
    fs::rename(&tmp, path).with_context(|| format!("replacing {}", path.display()))?;
    Ok(())
}
