//! `dosn` — drive the simulated network from the command line: create a
//! workspace, add users and miners, post and fetch access-controlled
//! content, inject miner misbehavior, and compare storage costs.

mod workspace;

use std::collections::{BTreeMap, BTreeSet};
use std::fs;
use std::io::Write as _;
use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{anyhow, bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use serde_json::json;

use dosn_core::acc::Role;
use dosn_core::ledger::Ledger;
use dosn_core::protocol::{FetchOutcome, PublishParams};
use dosn_core::scenario::{self, Scenario};
use dosn_core::storage::Behavior;

use workspace::{default_root, read_blocks, Workspace};

#[derive(Parser)]
#[command(name = "dosn", version, about = "Encrypted, access-controlled content over a simulated decentralized storage network")]
struct Cli {
    /// Workspace directory (defaults to $DOSN_WORKSPACE or ./.dosn).
    #[arg(long, global = true)]
    workspace: Option<PathBuf>,
    /// Emit machine-readable JSON on stdout instead of tables.
    #[arg(long, global = true)]
    json: bool,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Create a new workspace with a deterministic miner set.
    Init {
        /// Number of miners to register.
        #[arg(long, default_value_t = 6)]
        miners: usize,
        /// Seed for all randomness in this workspace.
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// Manage user identities.
    User {
        #[command(subcommand)]
        cmd: UserCmd,
    },
    /// Manage storage miners.
    Miner {
        #[command(subcommand)]
        cmd: MinerCmd,
    },
    /// Encrypt, shard, and publish a file under an access policy.
    Post(PostArgs),
    /// Add a member to a content's ACL (and allow their role).
    Grant {
        #[arg(long)]
        owner: String,
        #[arg(long)]
        content: String,
        #[arg(long)]
        user: String,
        #[arg(long)]
        role: String,
    },
    /// Revoke a content's policy.
    Revoke {
        #[arg(long)]
        owner: String,
        #[arg(long)]
        content: String,
    },
    /// Inspect committed policies.
    Policy {
        #[command(subcommand)]
        cmd: PolicyCmd,
    },
    /// Fetch a content as a user; plaintext goes to stdout or --output.
    Get {
        /// Requesting user.
        #[arg(long = "as")]
        requester: String,
        #[arg(long)]
        content: String,
        /// Write plaintext here instead of stdout.
        #[arg(short, long)]
        output: Option<PathBuf>,
    },
    /// Erase a content: revoke its policy and destroy all key shares.
    Forget {
        #[arg(long)]
        owner: String,
        #[arg(long)]
        content: String,
    },
    /// Access-contract maintenance.
    Acc {
        #[command(subcommand)]
        cmd: AccCmd,
    },
    /// Storage-network inspection.
    Net {
        #[command(subcommand)]
        cmd: NetCmd,
    },
    /// Ledger maintenance.
    Ledger {
        #[command(subcommand)]
        cmd: LedgerCmd,
    },
    /// Execute a JSON scenario file and emit its report.
    Run {
        scenario: PathBuf,
        /// Write the report here instead of stdout.
        #[arg(long)]
        report: Option<PathBuf>,
    },
    /// Storage-cost comparisons against the trusted-node baseline.
    Baseline {
        #[command(subcommand)]
        cmd: BaselineCmd,
    },
}

#[derive(Subcommand)]
enum UserCmd {
    /// Generate a keypair for a named user.
    Add { name: String },
    /// List known users.
    List,
}

#[derive(Subcommand)]
enum MinerCmd {
    /// Register one more miner.
    Add {
        /// Display name; defaults to m<N>.
        #[arg(long)]
        name: Option<String>,
    },
    /// Set a miner's behavior: honest, tamper, or offline.
    SetBehavior { miner: String, behavior: Behavior },
}

#[derive(Subcommand)]
enum PolicyCmd {
    /// Dump a committed policy as JSON.
    Show { policy_id: u64 },
}

#[derive(Subcommand)]
enum AccCmd {
    /// Deactivate an owner's access contract permanently.
    Delete {
        #[arg(long)]
        owner: String,
    },
}

#[derive(Subcommand)]
enum NetCmd {
    /// Per-miner storage and request accounting.
    Stats,
}

#[derive(Subcommand)]
enum LedgerCmd {
    /// Re-validate a block file from genesis and print the state digest.
    Verify {
        /// Defaults to the workspace's ledger.jsonl.
        file: Option<PathBuf>,
    },
}

#[derive(Subcommand)]
enum BaselineCmd {
    /// Compare current network storage against k trusted full replicas.
    Compare {
        #[arg(long, default_value_t = 5)]
        k: usize,
    },
}

#[derive(Args)]
struct PostArgs {
    /// Owner user name.
    #[arg(long)]
    owner: String,
    /// File with the content to publish.
    #[arg(long, conflicts_with = "text")]
    file: Option<PathBuf>,
    /// Inline content instead of a file.
    #[arg(long)]
    text: Option<String>,
    /// Key-share threshold.
    #[arg(long, default_value_t = 3)]
    t: u8,
    /// Key-share count.
    #[arg(long, default_value_t = 5)]
    n: u8,
    /// Shard replication factor.
    #[arg(long, default_value_t = 2)]
    r: usize,
    /// Chunk size in bytes.
    #[arg(long, default_value_t = dosn_core::merkle::DEFAULT_CHUNK_SIZE)]
    chunk_size: usize,
    /// Roles granted read access (repeatable).
    #[arg(long = "allow")]
    allowed: Vec<String>,
    /// ACL entries as user=role (repeatable).
    #[arg(long = "member")]
    members: Vec<String>,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("{}", json!({ "error": format!("{e:#}") }));
            ExitCode::FAILURE
        }
    }
}

fn run(cli: Cli) -> Result<()> {
    let root = cli.workspace.clone().unwrap_or_else(default_root);
    match cli.command {
        Command::Init { miners, seed } => {
            let mut ws = Workspace::init(&root, seed)?;
            for i in 0..miners {
                let name = format!("m{}", i + 1);
                let addr = ws.sim.add_miner();
                ws.miner_names.insert(name, addr.to_hex());
            }
            ws.save()?;
            if cli.json {
                println!(
                    "{}",
                    json!({
                        "workspace": root,
                        "seed": seed,
                        "miners": ws.miner_names,
                    })
                );
            } else {
                println!("initialized workspace at {} (seed {seed})", root.display());
                for (name, addr) in &ws.miner_names {
                    println!("  {name}  {addr}");
                }
            }
            Ok(())
        }

        Command::User { cmd } => match cmd {
            UserCmd::Add { name } => {
                let mut ws = Workspace::load(&root)?;
                // Check first: a refused command must not consume randomness.
                if ws.user_exists(&name) {
                    bail!("user `{name}` already exists");
                }
                let keypair = ws.sim.generate_keypair();
                ws.save_user(&name, &keypair)?;
                ws.save()?;
                if cli.json {
                    println!(
                        "{}",
                        json!({ "name": name, "address": keypair.address().to_hex() })
                    );
                } else {
                    println!("{name}  {}", keypair.address());
                }
                Ok(())
            }
            UserCmd::List => {
                let ws = Workspace::load(&root)?;
                let names = ws.user_names()?;
                if cli.json {
                    let entries: Vec<_> = names
                        .iter()
                        .map(|n| {
                            let kp = ws.load_user(n)?;
                            Ok(json!({ "name": n, "address": kp.address().to_hex() }))
                        })
                        .collect::<Result<_>>()?;
                    println!("{}", json!(entries));
                } else {
                    for n in names {
                        println!("{n}  {}", ws.load_user(&n)?.address());
                    }
                }
                Ok(())
            }
        },

        Command::Miner { cmd } => match cmd {
            MinerCmd::Add { name } => {
                let mut ws = Workspace::load(&root)?;
                let name = name.unwrap_or_else(|| format!("m{}", ws.miner_names.len() + 1));
                if ws.miner_names.contains_key(&name) {
                    bail!("miner `{name}` already exists");
                }
                let addr = ws.sim.add_miner();
                ws.miner_names.insert(name.clone(), addr.to_hex());
                ws.save()?;
                if cli.json {
                    println!("{}", json!({ "name": name, "address": addr.to_hex() }));
                } else {
                    println!("{name}  {addr}");
                }
                Ok(())
            }
            MinerCmd::SetBehavior { miner, behavior } => {
                let mut ws = Workspace::load(&root)?;
                let addr = ws.resolve_miner(&miner)?;
                ws.sim
                    .storage
                    .set_behavior(&addr, behavior)
                    .map_err(|e| anyhow!("{e}"))?;
                ws.save()?;
                report_ok(
                    cli.json,
                    json!({ "miner": miner, "behavior": format!("{behavior:?}").to_lowercase() }),
                )
            }
        },

        Command::Post(args) => {
            let mut ws = Workspace::load(&root)?;
            let owner = ws.load_user(&args.owner)?;
            let content = match (&args.file, &args.text) {
                (Some(path), None) => {
                    fs::read(path).with_context(|| format!("reading {}", path.display()))?
                }
                (None, Some(text)) => text.clone().into_bytes(),
                _ => bail!("exactly one of --file or --text is required"),
            };
            let mut acl = BTreeMap::new();
            for entry in &args.members {
                let (user, role_name) = entry
                    .split_once('=')
                    .ok_or_else(|| anyhow!("--member expects user=role, got `{entry}`"))?;
                acl.insert(ws.load_user(user)?.address(), parse_role(role_name)?);
            }
            let allowed: BTreeSet<Role> = args
                .allowed
                .iter()
                .map(|r| parse_role(r))
                .collect::<Result<_>>()?;
            let record = ws
                .sim
                .publish(
                    &owner,
                    &content,
                    acl,
                    allowed,
                    PublishParams {
                        threshold: args.t,
                        share_count: args.n,
                        replication: args.r,
                        chunk_size: args.chunk_size,
                    },
                )
                .map_err(|e| anyhow!("{e}"))?;
            ws.save()?;
            if cli.json {
                println!(
                    "{}",
                    json!({
                        "content_id": record.content_id,
                        "policy_id": record.policy_id,
                        "leaves": record.manifest.leaf_count(),
                        "bytes": record.manifest.total_len,
                    })
                );
            } else {
                println!("content {}", record.content_id);
                println!(
                    "policy {}  leaves {}  bytes {}",
                    record.policy_id,
                    record.manifest.leaf_count(),
                    record.manifest.total_len
                );
            }
            Ok(())
        }

        Command::Grant {
            owner,
            content,
            user,
            role,
        } => {
            let mut ws = Workspace::load(&root)?;
            let owner_kp = ws.load_user(&owner)?;
            let member = ws.load_user(&user)?.address();
            let new_role = parse_role(&role)?;
            let policy = ws
                .sim
                .ledger
                .state()
                .contracts
                .find_policy_by_content(&content)
                .ok_or_else(|| anyhow!("no policy for content {content}"))?;
            let policy_id = policy.policy_id;
            let mut acl = policy.acl.clone();
            let mut allowed = policy.allowed_roles.clone();
            acl.insert(member, new_role.clone());
            allowed.insert(new_role);
            ws.sim
                .update_policy(&owner_kp, policy_id, Some(acl), Some(allowed))
                .map_err(|e| anyhow!("{e}"))?;
            ws.save()?;
            report_ok(
                cli.json,
                json!({ "policy_id": policy_id, "granted": user, "role": role }),
            )
        }

        Command::Revoke { owner, content } => {
            let mut ws = Workspace::load(&root)?;
            let owner_kp = ws.load_user(&owner)?;
            let policy_id = ws
                .sim
                .ledger
                .state()
                .contracts
                .find_policy_by_content(&content)
                .ok_or_else(|| anyhow!("no policy for content {content}"))?
                .policy_id;
            ws.sim
                .revoke_policy(&owner_kp, policy_id)
                .map_err(|e| anyhow!("{e}"))?;
            ws.save()?;
            report_ok(cli.json, json!({ "policy_id": policy_id, "revoked": true }))
        }

        Command::Policy { cmd } => match cmd {
            PolicyCmd::Show { policy_id } => {
                let ws = Workspace::load(&root)?;
                let policy = ws
                    .sim
                    .ledger
                    .state()
                    .contracts
                    .policy(policy_id)
                    .ok_or_else(|| anyhow!("unknown policy {policy_id}"))?;
                println!("{}", serde_json::to_string_pretty(policy)?);
                Ok(())
            }
        },

        Command::Get {
            requester,
            content,
            output,
        } => {
            let mut ws = Workspace::load(&root)?;
            let kp = ws.load_user(&requester)?;
            let report = ws.sim.fetch(&kp, &content);
            for suspect in &report.suspects {
                eprintln!(
                    "warning: miner {} served data that failed verification",
                    ws.miner_display(suspect)
                );
            }
            ws.save()?;
            match report.outcome {
                FetchOutcome::Success(plaintext) => {
                    match output {
                        Some(path) => fs::write(&path, &plaintext)
                            .with_context(|| format!("writing {}", path.display()))?,
                        None => {
                            std::io::stdout().write_all(&plaintext)?;
                        }
                    }
                    Ok(())
                }
                FetchOutcome::Failure(reason) => bail!("fetch failed: {reason:?}"),
            }
        }

        Command::Forget { owner, content } => {
            let mut ws = Workspace::load(&root)?;
            let owner_kp = ws.load_user(&owner)?;
            ws.sim
                .forget(&owner_kp, &content)
                .map_err(|e| anyhow!("{e}"))?;
            ws.save()?;
            report_ok(cli.json, json!({ "forgotten": content }))
        }

        Command::Acc { cmd } => match cmd {
            AccCmd::Delete { owner } => {
                let mut ws = Workspace::load(&root)?;
                let owner_kp = ws.load_user(&owner)?;
                ws.sim.delete_acc(&owner_kp).map_err(|e| anyhow!("{e}"))?;
                ws.save()?;
                report_ok(cli.json, json!({ "acc_deleted": owner }))
            }
        },

        Command::Net { cmd } => match cmd {
            NetCmd::Stats => {
                let ws = Workspace::load(&root)?;
                let stats = ws.sim.storage.stats();
                if cli.json {
                    println!("{}", serde_json::to_string_pretty(&stats)?);
                } else {
                    println!(
                        "{:<8} {:<9} {:>7} {:>7} {:>14} {:>10} {:>10}",
                        "miner", "behavior", "shards", "shares", "bytes", "shard-req", "share-req"
                    );
                    for m in &stats.miners {
                        println!(
                            "{:<8} {:<9} {:>7} {:>7} {:>14} {:>10} {:>10}",
                            ws.miner_display(&m.address),
                            format!("{:?}", m.behavior).to_lowercase(),
                            m.shard_count,
                            m.share_count,
                            m.bytes_stored,
                            m.shard_requests,
                            m.share_requests
                        );
                    }
                    println!(
                        "total: {} bytes stored, {} requests",
                        stats.total_bytes, stats.total_requests
                    );
                }
                Ok(())
            }
        },

        Command::Ledger { cmd } => match cmd {
            LedgerCmd::Verify { file } => {
                let path = file.unwrap_or_else(|| root.join("ledger.jsonl"));
                let blocks = read_blocks(&path)?;
                let state = Ledger::replay(&blocks).map_err(|e| anyhow!("chain invalid: {e}"))?;
                let digest = state.digest();
                if cli.json {
                    println!(
                        "{}",
                        json!({
                            "blocks": blocks.len(),
                            "height": blocks.len() as u64 - 1,
                            "state_digest": digest.to_hex(),
                            "ok": true,
                        })
                    );
                } else {
                    println!("{} blocks, state digest {digest}", blocks.len());
                    println!("OK");
                }
                Ok(())
            }
        },

        Command::Run { scenario, report } => {
            let data = fs::read_to_string(&scenario)
                .with_context(|| format!("reading {}", scenario.display()))?;
            let parsed: Scenario = serde_json::from_str(&data).context("parsing scenario")?;
            let result = scenario::run(&parsed).map_err(|e| anyhow!("{e}"))?;
            let rendered = serde_json::to_string_pretty(&result)?;
            match report {
                Some(path) => fs::write(&path, rendered)?,
                None => println!("{rendered}"),
            }
            Ok(())
        }

        Command::Baseline { cmd } => match cmd {
            BaselineCmd::Compare { k } => {
                let ws = Workspace::load(&root)?;
                let plaintext_total: u64 = ws.sim.contents().map(|c| c.manifest.total_len).sum();
                let contents = ws.sim.contents().count();
                // Every trusted node replicates every content in full.
                let baseline_total = k as u64 * plaintext_total;
                let dosn_total = ws.sim.storage.total_bytes();
                let ratio = if baseline_total > 0 {
                    dosn_total as f64 / baseline_total as f64
                } else {
                    f64::NAN
                };
                if cli.json {
                    println!(
                        "{}",
                        json!({
                            "contents": contents,
                            "plaintext_bytes": plaintext_total,
                            "trusted_nodes": k,
                            "baseline_bytes": baseline_total,
                            "network_bytes": dosn_total,
                            "ratio": ratio,
                        })
                    );
                } else {
                    println!("contents:        {contents} ({plaintext_total} bytes plaintext)");
                    println!("baseline (k={k}): {baseline_total} bytes");
                    println!("this network:    {dosn_total} bytes");
                    if baseline_total > 0 {
                        println!("ratio:           {ratio:.3}");
                    }
                }
                Ok(())
            }
        },
    }
}

fn parse_role(name: &str) -> Result<Role> {
    Role::new(name).map_err(|e| anyhow!("{e}"))
}

fn report_ok(json_mode: bool, payload: serde_json::Value) -> Result<()> {
    if json_mode {
        println!("{payload}");
    } else if let Some(obj) = payload.as_object() {
        let line: Vec<String> = obj.iter().map(|(k, v)| format!("{k}: {v}")).collect();
        println!("{}", line.join("  "));
    }
    Ok(())
}
