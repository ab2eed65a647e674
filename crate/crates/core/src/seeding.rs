//! Labeled sub-seed derivation: all randomness flows from one top-level
//! seed, and each subsystem derives its stream by hashing the seed with a
//! stable label.

use sha2::{Digest, Sha256};

/// Derives a child seed from `(seed, label)` via SHA-256.
pub fn derive_seed(seed: u64, label: &str) -> u64 {
    let mut hasher = Sha256::new();
    hasher.update(seed.to_le_bytes());
    hasher.update(label.as_bytes());
    let digest = hasher.finalize();
    u64::from_le_bytes(digest[..8].try_into().unwrap())
}
