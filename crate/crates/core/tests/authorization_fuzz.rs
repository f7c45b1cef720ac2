//! Randomized authorization soundness: no sequence of transactions signed by
//! non-owner addresses ever changes a policy's ACL, allowed roles, or status.
//!
//! Ten thousand random call sequences are thrown at a ledger holding one
//! policy; after each sequence the policy must be bit-identical to what an
//! owner-only history produces, and the overall contract digest must match a
//! replay of the full log.

use std::collections::{BTreeMap, BTreeSet};

use rand::Rng;

use dosn_core::acc::{AccCall, KeyHolder, Role};
use dosn_core::canonical::{CanonicalEncode, CanonicalWriter};
use dosn_core::crypto::{Address, CipherMeta, KeyPair};
use dosn_core::ledger::{Ledger, Payload, Transaction};
use dosn_core::merkle::Cid;
use dosn_core::rng::SeededRng;

fn role(name: &str) -> Role {
    Role::new(name).unwrap()
}

fn policy_digest(ledger: &Ledger, policy_id: u64) -> Cid {
    let mut w = CanonicalWriter::new();
    ledger
        .state()
        .contracts
        .policy(policy_id)
        .expect("policy exists")
        .encode(&mut w);
    w.digest()
}

fn submit(ledger: &mut Ledger, sender: &KeyPair, call: AccCall) {
    let nonce = ledger.next_nonce(&sender.address());
    let tx = Transaction::sign(sender, nonce, Payload::Acc(call));
    ledger.submit(tx);
}

fn random_call(rng: &mut SeededRng, owner: Address, member: Address) -> AccCall {
    match rng.gen_range(0..6) {
        0 => AccCall::UpdatePolicy {
            policy_id: 1,
            new_acl: Some(BTreeMap::from([(member, role("intruder"))])),
            new_allowed_roles: Some(BTreeSet::from([role("intruder")])),
        },
        1 => AccCall::UpdatePolicy {
            policy_id: 1,
            new_acl: Some(BTreeMap::new()),
            new_allowed_roles: None,
        },
        2 => AccCall::RevokePolicy { policy_id: 1 },
        3 => AccCall::CheckAccess { policy_id: 1 },
        4 => AccCall::DeleteAcc { owner },
        _ => AccCall::CreatePolicy {
            content_id: "anchored-content".into(),
            acl: BTreeMap::new(),
            allowed_roles: BTreeSet::new(),
            key_holders: vec![KeyHolder {
                miner: member,
                x: 1,
            }],
            leaf_cids: vec![Cid::from_digest([3; 32])],
            shard_locations: BTreeMap::new(),
            threshold: 1,
            cipher: CipherMeta {
                nonce: [0; 12],
                tag: [0; 16],
            },
        },
    }
}

#[test]
fn non_owners_can_never_mutate_a_policy() {
    let mut rng = SeededRng::from_seed(0xfacade);
    let owner = KeyPair::generate(&mut rng);
    let friend = KeyPair::generate(&mut rng);
    let attackers: Vec<KeyPair> = (0..8).map(|_| KeyPair::generate(&mut rng)).collect();

    let mut ledger = Ledger::new();
    submit_anchor(&mut ledger, &owner);
    submit(
        &mut ledger,
        &owner,
        AccCall::CreatePolicy {
            content_id: "anchored-content".into(),
            acl: BTreeMap::from([(friend.address(), role("friend"))]),
            allowed_roles: BTreeSet::from([role("friend")]),
            key_holders: vec![KeyHolder {
                miner: attackers[0].address(),
                x: 1,
            }],
            leaf_cids: vec![Cid::from_digest([3; 32])],
            shard_locations: BTreeMap::new(),
            threshold: 1,
            cipher: CipherMeta {
                nonce: [0; 12],
                tag: [0; 16],
            },
        },
    );
    let pristine = policy_digest(&ledger, 1);

    for _ in 0..10_000 {
        let len = rng.gen_range(1..=4);
        for _ in 0..len {
            let attacker = &attackers[rng.gen_range(0..attackers.len())];
            let call = random_call(&mut rng, owner.address(), attacker.address());
            submit(&mut ledger, attacker, call);
        }
        assert_eq!(
            policy_digest(&ledger, 1),
            pristine,
            "policy drifted under non-owner transactions"
        );
    }

    // The full log still replays to the live digest.
    let replayed = Ledger::replay(ledger.blocks()).unwrap();
    assert_eq!(replayed.digest(), ledger.state_digest());
}

fn submit_anchor(ledger: &mut Ledger, owner: &KeyPair) {
    let nonce = ledger.next_nonce(&owner.address());
    let tx = Transaction::sign(
        owner,
        nonce,
        Payload::AnchorRoot {
            content_id: "anchored-content".into(),
            root: Cid::from_digest([3; 32]),
        },
    );
    ledger.submit(tx);
}
