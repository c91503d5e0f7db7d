//! Seed derivation. Every random stream is keyed off one root seed and a label, so
//! results never depend on scheduling.

use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;
use sha2::{Digest, Sha256};

/// Written into reports so a run can be replayed.
pub const RNG_ALGORITHM: &str =
    "ChaCha20 (rand_chacha 0.9), sub-seeds = SHA-256(root_le || label)[..8]";

pub fn derive_seed(root: u64, label: &str) -> u64 {
    let mut h = Sha256::new();
    h.update(root.to_le_bytes());
    h.update(label.as_bytes());
    let digest = h.finalize();
    let mut first = [0u8; 8];
    first.copy_from_slice(&digest[..8]);
    u64::from_le_bytes(first)
}

pub fn stream(root: u64, label: &str) -> ChaCha20Rng {
    ChaCha20Rng::seed_from_u64(derive_seed(root, label))
}
