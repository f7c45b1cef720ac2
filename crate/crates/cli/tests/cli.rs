//! End-to-end tests driving the compiled `dosn` binary, one process per
//! command, the way a user would.

use std::path::Path;
use std::process::{Command, Output};

use serde_json::Value;
use tempfile::TempDir;

fn dosn(workspace: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_dosn"))
        .env("DOSN_WORKSPACE", workspace)
        .args(args)
        .output()
        .expect("spawn dosn")
}

fn ok(workspace: &Path, args: &[&str]) -> String {
    let out = dosn(workspace, args);
    assert!(
        out.status.success(),
        "dosn {args:?} failed: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    String::from_utf8_lossy(&out.stdout).into_owned()
}

fn ok_json(workspace: &Path, args: &[&str]) -> Value {
    let mut with_json = vec!["--json"];
    with_json.extend_from_slice(args);
    serde_json::from_str(&ok(workspace, &with_json)).expect("valid json output")
}

fn setup(seed: u64, miners: u32) -> TempDir {
    let dir = TempDir::new().unwrap();
    let ws = dir.path().join("ws");
    ok(&ws, &["init", "--miners", &miners.to_string(), "--seed", &seed.to_string()]);
    dir
}

fn ws(dir: &TempDir) -> std::path::PathBuf {
    dir.path().join("ws")
}

#[test]
fn post_grant_get_round_trip() {
    let dir = setup(42, 6);
    let ws = ws(&dir);
    ok(&ws, &["user", "add", "alice"]);
    ok(&ws, &["user", "add", "bob"]);

    // A binary payload with all byte values.
    let payload: Vec<u8> = (0..2048u32).map(|i| (i % 251) as u8).collect();
    let input = dir.path().join("note.bin");
    std::fs::write(&input, &payload).unwrap();

    let posted = ok_json(
        &ws,
        &[
            "post", "--owner", "alice", "--file", input.to_str().unwrap(),
            "--t", "3", "--n", "5", "--r", "2", "--chunk-size", "256",
            "--allow", "friend",
        ],
    );
    let cid = posted["content_id"].as_str().unwrap().to_string();
    assert_eq!(posted["leaves"], 8);

    // Unauthorized fetch: domain error, exit 1, JSON error on stderr.
    let denied = dosn(&ws, &["get", "--as", "bob", "--content", &cid]);
    assert_eq!(denied.status.code(), Some(1));
    let err: Value = serde_json::from_str(&String::from_utf8_lossy(&denied.stderr)).unwrap();
    assert!(err["error"].as_str().unwrap().contains("NotInAcl"));

    ok(
        &ws,
        &["grant", "--owner", "alice", "--content", &cid, "--user", "bob", "--role", "friend"],
    );

    let fetched = dosn(&ws, &["get", "--as", "bob", "--content", &cid]);
    assert!(fetched.status.success());
    assert_eq!(fetched.stdout, payload, "bit-exact plaintext on stdout");

    // Output to file as well.
    let out_path = dir.path().join("fetched.bin");
    ok(
        &ws,
        &["get", "--as", "bob", "--content", &cid, "--output", out_path.to_str().unwrap()],
    );
    assert_eq!(std::fs::read(&out_path).unwrap(), payload);
}

#[test]
fn identical_seeds_produce_identical_workspaces() {
    let run = || {
        let dir = setup(7, 5);
        let ws = ws(&dir);
        ok(&ws, &["user", "add", "alice"]);
        ok(&ws, &["user", "add", "bob"]);
        ok(
            &ws,
            &[
                "post", "--owner", "alice", "--text", "same in every universe",
                "--t", "2", "--n", "3", "--chunk-size", "8",
                "--member", "bob=friend", "--allow", "friend",
            ],
        );
        let posted = ok_json(&ws, &["user", "list"]);
        let verify = ok_json(&ws, &["ledger", "verify"]);
        let stats = ok_json(&ws, &["net", "stats"]);
        (posted, verify["state_digest"].clone(), stats)
    };
    let (users_a, digest_a, stats_a) = run();
    let (users_b, digest_b, stats_b) = run();
    assert_eq!(users_a, users_b, "identical user addresses");
    assert_eq!(digest_a, digest_b, "identical ledger digests");
    assert_eq!(stats_a, stats_b, "identical storage accounting");
}

#[test]
fn tampering_miner_is_survived_and_named_on_stderr() {
    let dir = setup(1234, 4);
    let ws = ws(&dir);
    ok(&ws, &["user", "add", "alice"]);
    ok(&ws, &["user", "add", "bob"]);
    let posted = ok_json(
        &ws,
        &[
            "post", "--owner", "alice", "--text", "replicas keep us honest",
            "--t", "2", "--n", "3", "--r", "2", "--chunk-size", "4",
            "--member", "bob=friend", "--allow", "friend",
        ],
    );
    let cid = posted["content_id"].as_str().unwrap().to_string();
    let policy_id = posted["policy_id"].as_u64().unwrap().to_string();

    // Find the first-listed replica of the first shard and corrupt it.
    let policy: Value = serde_json::from_str(&ok(&ws, &["policy", "show", &policy_id])).unwrap();
    let first_replica = policy["shard_locations"]
        .as_object()
        .unwrap()
        .values()
        .next()
        .unwrap()[0]
        .as_str()
        .unwrap()
        .to_string();
    ok(&ws, &["miner", "set-behavior", &first_replica, "tamper"]);

    let fetched = dosn(&ws, &["get", "--as", "bob", "--content", &cid]);
    assert!(fetched.status.success(), "replica fallback keeps the fetch alive");
    assert_eq!(fetched.stdout, b"replicas keep us honest");
    let stderr = String::from_utf8_lossy(&fetched.stderr);
    assert!(
        stderr.contains("failed verification"),
        "tamperer must be named, got: {stderr}"
    );
}

#[test]
fn forget_then_everyone_is_denied() {
    let dir = setup(9, 5);
    let ws = ws(&dir);
    ok(&ws, &["user", "add", "alice"]);
    ok(&ws, &["user", "add", "bob"]);
    let posted = ok_json(
        &ws,
        &[
            "post", "--owner", "alice", "--text", "soon gone",
            "--t", "2", "--n", "3", "--chunk-size", "4",
            "--member", "bob=friend", "--allow", "friend",
        ],
    );
    let cid = posted["content_id"].as_str().unwrap().to_string();
    assert!(dosn(&ws, &["get", "--as", "bob", "--content", &cid]).status.success());

    ok(&ws, &["forget", "--owner", "alice", "--content", &cid]);

    for user in ["bob", "alice"] {
        let denied = dosn(&ws, &["get", "--as", user, "--content", &cid]);
        assert_eq!(denied.status.code(), Some(1));
    }

    // Forgetting twice is rejected.
    let again = dosn(&ws, &["forget", "--owner", "alice", "--content", &cid]);
    assert_eq!(again.status.code(), Some(1));
}

#[test]
fn ledger_verify_catches_corruption() {
    let dir = setup(11, 4);
    let ws = ws(&dir);
    ok(&ws, &["user", "add", "alice"]);
    ok(
        &ws,
        &["post", "--owner", "alice", "--text", "x", "--t", "1", "--n", "1", "--r", "1"],
    );
    assert!(dosn(&ws, &["ledger", "verify"]).status.success());

    // Flip one character inside a committed block line.
    let ledger_path = ws.join("ledger.jsonl");
    let data = std::fs::read_to_string(&ledger_path).unwrap();
    let corrupted = data.replacen("\"nonce\":1", "\"nonce\":7", 1);
    assert_ne!(data, corrupted, "fixture assumes a nonce-1 transaction");
    std::fs::write(&ledger_path, corrupted).unwrap();

    let out = dosn(&ws, &["ledger", "verify"]);
    assert_eq!(out.status.code(), Some(1));
    let err: Value = serde_json::from_str(&String::from_utf8_lossy(&out.stderr)).unwrap();
    assert!(err["error"].as_str().unwrap().contains("chain invalid"));
}

#[test]
fn scenario_run_emits_report() {
    let dir = TempDir::new().unwrap();
    let scenario = dir.path().join("scenario.json");
    std::fs::write(
        &scenario,
        r#"{
            "seed": 5,
            "miners": [{"name": "m1"}, {"name": "m2"}, {"name": "m3"}],
            "users": ["alice", "bob"],
            "operations": [
                {"op": "publish", "owner": "alice", "id": "c", "text": "scenario post",
                 "t": 2, "n": 3, "r": 2, "chunk_size": 4,
                 "acl": {"bob": "friend"}, "allow": ["friend"]},
                {"op": "fetch", "user": "bob", "content": "c"},
                {"op": "stats"}
            ]
        }"#,
    )
    .unwrap();

    let report_path = dir.path().join("report.json");
    let out = Command::new(env!("CARGO_BIN_EXE_dosn"))
        .args([
            "run",
            scenario.to_str().unwrap(),
            "--report",
            report_path.to_str().unwrap(),
        ])
        .output()
        .unwrap();
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let report: Value = serde_json::from_str(&std::fs::read_to_string(&report_path).unwrap()).unwrap();
    assert_eq!(report["operations"][1]["outcome"], "success");
    assert_eq!(report["operations"][1]["bytes_len"], 13);
    assert!(report["ledger_state_digest"].as_str().unwrap().len() == 64);
}

#[test]
fn miner_add_extends_the_network() {
    let dir = setup(3, 2);
    let ws = ws(&dir);
    let added = ok_json(&ws, &["miner", "add"]);
    assert_eq!(added["name"], "m3");
    let named = ok_json(&ws, &["miner", "add", "--name", "archive"]);
    assert_eq!(named["name"], "archive");

    let stats = ok_json(&ws, &["net", "stats"]);
    assert_eq!(stats["miners"].as_array().unwrap().len(), 4);

    // Duplicate names are refused, as are duplicate users.
    let dup = dosn(&ws, &["miner", "add", "--name", "archive"]);
    assert_eq!(dup.status.code(), Some(1));
    ok(&ws, &["user", "add", "zoe"]);
    let dup = dosn(&ws, &["user", "add", "zoe"]);
    assert_eq!(dup.status.code(), Some(1));
}

#[test]
fn usage_errors_exit_2() {
    let dir = TempDir::new().unwrap();
    let out = Command::new(env!("CARGO_BIN_EXE_dosn"))
        .env("DOSN_WORKSPACE", dir.path())
        .arg("definitely-not-a-command")
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(2));
}
