//! Authenticated encryption for owner content, and signing identities for
//! every actor on the ledger.
//!
//! Content is sealed with ChaCha20-Poly1305; any modified octet, wrong key, or
//! wrong associated data fails closed with [`CryptoError::AuthenticationFailed`]
//! rather than yielding garbage plaintext. Actors are Ed25519 key pairs whose
//! address is the lowercase hex of the verification key — the simplest
//! injective mapping from key to identity.

use std::fmt;

use chacha20poly1305::aead::generic_array::GenericArray;
use chacha20poly1305::{AeadInPlace, ChaCha20Poly1305, KeyInit};
use ed25519_dalek::{Signer, SigningKey, Verifier, VerifyingKey};
use rand::RngCore;
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub const KEY_LEN: usize = 32;
pub const NONCE_LEN: usize = 12;
pub const TAG_LEN: usize = 16;
pub const ADDRESS_LEN: usize = 32;
pub const SIGNATURE_LEN: usize = 64;

#[derive(Debug, Error, PartialEq, Eq)]
pub enum CryptoError {
    /// Wrong key, tampered ciphertext, or mismatched associated data.
    #[error("authentication failed")]
    AuthenticationFailed,
    #[error("bad key length: expected {KEY_LEN}, got {0}")]
    BadKeyLength(usize),
    #[error("bad hex encoding")]
    BadHex,
}

/// The 32-octet content-encryption secret. Generated only from the seeded
/// randomness source; later split into threshold shares.
#[derive(Clone, PartialEq, Eq)]
pub struct SymmetricKey([u8; KEY_LEN]);

impl SymmetricKey {
    pub fn generate(rng: &mut impl RngCore) -> Self {
        let mut bytes = [0u8; KEY_LEN];
        rng.fill_bytes(&mut bytes);
        Self(bytes)
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self, CryptoError> {
        let arr: [u8; KEY_LEN] = bytes
            .try_into()
            .map_err(|_| CryptoError::BadKeyLength(bytes.len()))?;
        Ok(Self(arr))
    }

    pub fn as_bytes(&self) -> &[u8; KEY_LEN] {
        &self.0
    }
}

impl fmt::Debug for SymmetricKey {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str("SymmetricKey(..)")
    }
}

/// Sealed content: per-encryption nonce, body of the same length as the
/// plaintext, and the authentication tag kept detached from the body so the
/// body alone can be chunked and content-addressed.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Ciphertext {
    #[serde(with = "hex")]
    pub nonce: [u8; NONCE_LEN],
    #[serde(with = "hex")]
    pub body: Vec<u8>,
    #[serde(with = "hex")]
    pub tag: [u8; TAG_LEN],
}

/// Nonce and tag of a [`Ciphertext`] without its body — the part that travels
/// inside policies and grants while the body lives as shards on miners.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CipherMeta {
    #[serde(with = "hex")]
    pub nonce: [u8; NONCE_LEN],
    #[serde(with = "hex")]
    pub tag: [u8; TAG_LEN],
}

impl Ciphertext {
    pub fn meta(&self) -> CipherMeta {
        CipherMeta {
            nonce: self.nonce,
            tag: self.tag,
        }
    }

    pub fn from_parts(meta: &CipherMeta, body: Vec<u8>) -> Self {
        Self {
            nonce: meta.nonce,
            body,
            tag: meta.tag,
        }
    }
}

pub fn encrypt(
    key: &SymmetricKey,
    nonce: [u8; NONCE_LEN],
    plaintext: &[u8],
    ad: &[u8],
) -> Ciphertext {
    let cipher = ChaCha20Poly1305::new(GenericArray::from_slice(&key.0));
    let mut body = plaintext.to_vec();
    let tag = cipher
        .encrypt_in_place_detached(GenericArray::from_slice(&nonce), ad, &mut body)
        .expect("chacha20poly1305 accepts any message length used here");
    Ciphertext {
        nonce,
        body,
        tag: tag.into(),
    }
}

pub fn decrypt(key: &SymmetricKey, ct: &Ciphertext, ad: &[u8]) -> Result<Vec<u8>, CryptoError> {
    let cipher = ChaCha20Poly1305::new(GenericArray::from_slice(&key.0));
    let mut body = ct.body.clone();
    cipher
        .decrypt_in_place_detached(
            GenericArray::from_slice(&ct.nonce),
            ad,
            &mut body,
            GenericArray::from_slice(&ct.tag),
        )
        .map_err(|_| CryptoError::AuthenticationFailed)?;
    Ok(body)
}

/// Unique nonces within a run: a random 4-octet prefix drawn once from the
/// seeded source, mixed with a strictly increasing counter.
#[derive(Debug, Clone)]
pub struct NonceSequence {
    prefix: [u8; 4],
    counter: u64,
}

impl NonceSequence {
    pub fn new(rng: &mut impl RngCore) -> Self {
        let mut prefix = [0u8; 4];
        rng.fill_bytes(&mut prefix);
        Self { prefix, counter: 0 }
    }

    pub fn resume(prefix: [u8; 4], counter: u64) -> Self {
        Self { prefix, counter }
    }

    pub fn counter(&self) -> u64 {
        self.counter
    }

    pub fn prefix(&self) -> [u8; 4] {
        self.prefix
    }

    pub fn next_nonce(&mut self) -> [u8; NONCE_LEN] {
        let mut nonce = [0u8; NONCE_LEN];
        nonce[..4].copy_from_slice(&self.prefix);
        nonce[4..].copy_from_slice(&self.counter.to_le_bytes());
        self.counter += 1;
        nonce
    }
}

/// Actor identity: lowercase hex of the Ed25519 verification key.
#[derive(Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Address([u8; ADDRESS_LEN]);

impl Address {
    pub fn from_bytes(bytes: [u8; ADDRESS_LEN]) -> Self {
        Self(bytes)
    }

    pub fn as_bytes(&self) -> &[u8; ADDRESS_LEN] {
        &self.0
    }

    pub fn to_hex(&self) -> String {
        hex::encode(self.0)
    }

    pub fn from_hex(s: &str) -> Result<Self, CryptoError> {
        let bytes: [u8; ADDRESS_LEN] = hex::decode(s)
            .map_err(|_| CryptoError::BadHex)?
            .try_into()
            .map_err(|_| CryptoError::BadHex)?;
        Ok(Self(bytes))
    }
}

impl fmt::Display for Address {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.to_hex())
    }
}

impl fmt::Debug for Address {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.to_hex())
    }
}

impl Serialize for Address {
    fn serialize<S: serde::Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        serializer.serialize_str(&self.to_hex())
    }
}

impl<'de> Deserialize<'de> for Address {
    fn deserialize<D: serde::Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        let s = String::deserialize(deserializer)?;
        Address::from_hex(&s).map_err(serde::de::Error::custom)
    }
}

/// Detached Ed25519 signature, hex-encoded in all files and CLI output.
#[derive(Clone, Copy, PartialEq, Eq)]
pub struct Signature([u8; SIGNATURE_LEN]);

impl Signature {
    pub fn from_bytes(bytes: [u8; SIGNATURE_LEN]) -> Self {
        Self(bytes)
    }

    pub fn as_bytes(&self) -> &[u8; SIGNATURE_LEN] {
        &self.0
    }

    pub fn to_hex(&self) -> String {
        hex::encode(self.0)
    }
}

impl fmt::Debug for Signature {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.to_hex())
    }
}

impl Serialize for Signature {
    fn serialize<S: serde::Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        serializer.serialize_str(&self.to_hex())
    }
}

impl<'de> Deserialize<'de> for Signature {
    fn deserialize<D: serde::Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        let s = String::deserialize(deserializer)?;
        let bytes: [u8; SIGNATURE_LEN] = hex::decode(&s)
            .map_err(serde::de::Error::custom)?
            .try_into()
            .map_err(|_| serde::de::Error::custom("bad signature length"))?;
        Ok(Self(bytes))
    }
}

/// Ed25519 signing identity for owners, readers, and miners.
#[derive(Clone)]
pub struct KeyPair {
    signing: SigningKey,
}

impl KeyPair {
    pub fn generate(rng: &mut impl RngCore) -> Self {
        let mut seed = [0u8; 32];
        rng.fill_bytes(&mut seed);
        Self {
            signing: SigningKey::from_bytes(&seed),
        }
    }

    pub fn from_secret_bytes(bytes: &[u8]) -> Result<Self, CryptoError> {
        let seed: [u8; 32] = bytes
            .try_into()
            .map_err(|_| CryptoError::BadKeyLength(bytes.len()))?;
        Ok(Self {
            signing: SigningKey::from_bytes(&seed),
        })
    }

    pub fn secret_bytes(&self) -> [u8; 32] {
        self.signing.to_bytes()
    }

    pub fn address(&self) -> Address {
        Address(self.signing.verifying_key().to_bytes())
    }

    pub fn sign(&self, message: &[u8]) -> Signature {
        Signature(self.signing.sign(message).to_bytes())
    }
}

impl fmt::Debug for KeyPair {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "KeyPair({})", self.address())
    }
}

/// Signature check against an address. Returns false on any mismatch or
/// malformed input; never traps.
pub fn verify(address: &Address, message: &[u8], signature: &Signature) -> bool {
    let Ok(key) = VerifyingKey::from_bytes(&address.0) else {
        return false;
    };
    let sig = ed25519_dalek::Signature::from_bytes(&signature.0);
    key.verify(message, &sig).is_ok()
}
