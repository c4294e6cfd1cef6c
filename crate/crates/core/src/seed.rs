//! Sub-seed derivation.
//!
//! Every random stream is keyed by `(seed, purpose, index)` through SHA-256 so
//! streams never share state and stay stable across platforms.

use sha2::{Digest, Sha256};

/// Derives an independent 64-bit seed for `(seed, purpose, index)`.
pub fn derive_seed(seed: u64, purpose: &str, index: u64) -> u64 {
    let mut hasher = Sha256::new();
    hasher.update(seed.to_le_bytes());
    hasher.update((purpose.len() as u64).to_le_bytes());
    hasher.update(purpose.as_bytes());
    hasher.update(index.to_le_bytes());
    let digest = hasher.finalize();
    let mut bytes = [0u8; 8];
    bytes.copy_from_slice(&digest[..8]);
    u64::from_le_bytes(bytes)
}

/// ChaCha stream for `(seed, purpose, index)`.
pub fn rng_for(seed: u64, purpose: &str, index: u64) -> rand_chacha::ChaCha8Rng {
    use rand::SeedableRng;
    rand_chacha::ChaCha8Rng::seed_from_u64(derive_seed(seed, purpose, index))
}
