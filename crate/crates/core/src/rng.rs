//! Deterministic, scheduling-independent random streams.
//!
//! Every stochastic quantity draws from its own ChaCha stream whose seed is
//! `SHA-256(root_seed || domain label || index)`. Streams are therefore
//! independent of thread count and evaluation order, and distinct domains
//! (measurement noise, medium noise, trials, ...) never share a stream.

use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha12Rng;
use sha2::{Digest, Sha256};

/// A derived random stream.
pub type Stream = ChaCha12Rng;

/// Create the stream for (`root_seed`, `domain`, `index`).
pub fn stream(root_seed: u64, domain: &str, index: u64) -> Stream {
    let mut h = Sha256::new();
    h.update(root_seed.to_le_bytes());
    h.update(domain.as_bytes());
    h.update(index.to_le_bytes());
    let digest = h.finalize();
    let mut seed = [0u8; 32];
    seed.copy_from_slice(&digest);
    ChaCha12Rng::from_seed(seed)
}
