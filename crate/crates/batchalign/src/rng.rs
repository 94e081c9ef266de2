//! Seed derivation for reproducible, schedule-independent random streams.
//!
//! Every random decision in the pipeline draws from a `ChaCha8Rng` whose seed
//! is derived from a named base seed plus a string tag (and optionally an
//! index). Derived streams are independent of iteration order, so per-topic
//! or per-resample work can run in parallel without changing results.

use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use sha2::{Digest, Sha256};

/// Derives a new 64-bit seed from `base` and a string tag.
pub fn mix_seed(base: u64, tag: &str) -> u64 {
    let mut hasher = Sha256::new();
    hasher.update(base.to_le_bytes());
    hasher.update(tag.as_bytes());
    let digest = hasher.finalize();
    u64::from_le_bytes(digest[..8].try_into().expect("digest is 32 bytes"))
}

/// Derives a seed from `base`, a tag, and a numeric index.
pub fn mix_seed_idx(base: u64, tag: &str, idx: u64) -> u64 {
    let mut hasher = Sha256::new();
    hasher.update(base.to_le_bytes());
    hasher.update(tag.as_bytes());
    hasher.update(idx.to_le_bytes());
    let digest = hasher.finalize();
    u64::from_le_bytes(digest[..8].try_into().expect("digest is 32 bytes"))
}

/// A deterministic RNG for the given seed.
pub fn rng_from(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng;

    #[test]
    fn derived_seeds_are_stable() {
        assert_eq!(mix_seed(7, "topics"), mix_seed(7, "topics"));
        assert_ne!(mix_seed(7, "topics"), mix_seed(8, "topics"));
        assert_ne!(mix_seed(7, "topics"), mix_seed(7, "pool"));
        assert_ne!(mix_seed_idx(7, "b", 0), mix_seed_idx(7, "b", 1));
    }

    #[test]
    fn rng_streams_reproduce() {
        let mut r1 = rng_from(42);
        let mut r2 = rng_from(42);
        let a: Vec<u32> = (0..8).map(|_| r1.gen()).collect();
        let b: Vec<u32> = (0..8).map(|_| r2.gen()).collect();
        assert_eq!(a, b);
    }
}
