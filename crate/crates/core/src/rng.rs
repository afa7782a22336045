//! Keyed random streams.
//!
//! Every stochastic quantity in the crate draws from a ChaCha stream whose
//! 256-bit key is the SHA-256 digest of a structured label: the global seed,
//! a namespace string and a list of indices (seed index, replicate index,
//! ...). Streams never depend on thread scheduling, so results are identical
//! for any thread count.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use sha2::{Digest, Sha256};

/// Random stream type used throughout the crate.
pub type Stream = ChaCha8Rng;

/// Derive the stream for `(seed, namespace, indices)`.
pub fn stream(seed: u64, namespace: &str, indices: &[u64]) -> Stream {
    let mut hasher = Sha256::new();
    hasher.update(b"ergofit/v1");
    hasher.update(seed.to_le_bytes());
    hasher.update((namespace.len() as u64).to_le_bytes());
    hasher.update(namespace.as_bytes());
    for i in indices {
        hasher.update(i.to_le_bytes());
    }
    let digest = hasher.finalize();
    let mut key = [0u8; 32];
    key.copy_from_slice(&digest);
    Stream::from_seed(key)
}
