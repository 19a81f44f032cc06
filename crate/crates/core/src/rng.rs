//! Seed derivation and deterministic random streams.
//!
//! Every random draw in the crate flows through a ChaCha stream whose seed is
//! a pure function of user-supplied seeds and integer labels (grid size,
//! replicate index, purpose tag). Results are therefore independent of thread
//! scheduling and stable across platforms.

use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// SplitMix64 finalizer. Good avalanche, cheap, stable by construction.
#[inline]
pub fn mix64(mut x: u64) -> u64 {
    x = x.wrapping_add(0x9e37_79b9_7f4a_7c15);
    x = (x ^ (x >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    x = (x ^ (x >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    x ^ (x >> 31)
}

/// Fold a list of words into a single derived seed.
#[inline]
pub fn derive_seed(seed: u64, words: &[u64]) -> u64 {
    let mut acc = mix64(seed);
    for &w in words {
        acc = mix64(acc ^ w);
    }
    acc
}

/// Deterministic stream for a derived seed.
pub fn stream(seed: u64, words: &[u64]) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(derive_seed(seed, words))
}

/// Purpose tags keep unrelated streams (design draw, noise draw, tie draw)
/// disjoint even when they share a user seed.
pub mod tag {
    pub const DESIGN: u64 = 0x1;
    pub const NOISE: u64 = 0x2;
    pub const DECOMPOSITION: u64 = 0x3;
    pub const POWER_RESTART: u64 = 0x4;
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn derive_is_pure_and_label_sensitive() {
        assert_eq!(derive_seed(7, &[1, 2]), derive_seed(7, &[1, 2]));
        assert_ne!(derive_seed(7, &[1, 2]), derive_seed(7, &[2, 1]));
        assert_ne!(derive_seed(7, &[1]), derive_seed(8, &[1]));
    }

    #[test]
    fn streams_reproduce() {
        use rand::Rng;
        let a: f64 = stream(42, &[tag::NOISE, 3]).gen();
        let b: f64 = stream(42, &[tag::NOISE, 3]).gen();
        assert_eq!(a, b);
    }
}
