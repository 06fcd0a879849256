//! Seed derivation.
//!
//! Every random stream in the toolkit comes from one global seed expanded per
//! component: the derived seed is the first eight bytes (little endian) of
//! `SHA-256(global_seed_le || component_label)`. Labels are plain strings such
//! as `"stage1/shuffle/epoch-3"`, so rerunning one component reproduces its
//! stream without replaying the others.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use sha2::{Digest, Sha256};

pub fn derive_seed(global: u64, component: &str) -> u64 {
    let mut hasher = Sha256::new();
    hasher.update(global.to_le_bytes());
    hasher.update(component.as_bytes());
    let digest = hasher.finalize();
    let mut bytes = [0u8; 8];
    bytes.copy_from_slice(&digest[..8]);
    u64::from_le_bytes(bytes)
}

pub fn rng_for(global: u64, component: &str) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(derive_seed(global, component))
}
