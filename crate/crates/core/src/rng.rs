//! The seeded randomness source backing every nondeterministic choice.
//!
//! A thin wrapper around ChaCha20 keystream randomness. The stream position
//! can be saved and restored, which lets a persisted workspace continue the
//! exact byte sequence across process restarts.

use rand::{CryptoRng, RngCore, SeedableRng};
use rand_chacha::ChaCha20Rng;

/// Deterministic random source. Same seed, same byte sequence, on every
/// platform and in every run.
#[derive(Debug, Clone)]
pub struct SeededRng {
    inner: ChaCha20Rng,
}

impl SeededRng {
    pub fn from_seed(seed: u64) -> Self {
        Self {
            inner: ChaCha20Rng::seed_from_u64(seed),
        }
    }

    /// Position in the keystream, in 32-bit words. Persist this together
    /// with the seed to resume the stream later.
    pub fn word_pos(&self) -> u128 {
        self.inner.get_word_pos()
    }

    /// Rebuild the source at an exact stream position.
    pub fn restore(seed: u64, word_pos: u128) -> Self {
        let mut inner = ChaCha20Rng::seed_from_u64(seed);
        inner.set_word_pos(word_pos);
        Self { inner }
    }

    pub fn fill(&mut self, buf: &mut [u8]) {
        self.inner.fill_bytes(buf);
    }
}

impl RngCore for SeededRng {
    fn next_u32(&mut self) -> u32 {
        self.inner.next_u32()
    }

    fn next_u64(&mut self) -> u64 {
        self.inner.next_u64()
    }

    fn fill_bytes(&mut self, dest: &mut [u8]) {
        self.inner.fill_bytes(dest)
    }

    fn try_fill_bytes(&mut self, dest: &mut [u8]) -> Result<(), rand::Error> {
        self.inner.try_fill_bytes(dest)
    }
}

impl CryptoRng for SeededRng {}
