//! Benchmark helpers shared by the criterion targets.

use dosn_core::rng::SeededRng;

/// Deterministic pseudo-random content of the given size.
pub fn content(len: usize, seed: u64) -> Vec<u8> {
    let mut rng = SeededRng::from_seed(seed);
    let mut buf = vec![0u8; len];
    rng.fill(&mut buf);
    buf
}
