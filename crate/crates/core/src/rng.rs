//! Seed derivation shared by every randomized routine.
//!
//! Child seeds are `splitmix64(seed ^ index)`, so any implementation that
//! follows the same derivation reproduces identical forests, shuffles and
//! cohorts regardless of thread scheduling.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// One step of the splitmix64 finalizer.
pub fn splitmix64(x: u64) -> u64 {
    let mut z = x.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Seed for the `index`-th child stream of `seed`.
pub fn derive_seed(seed: u64, index: u64) -> u64 {
    splitmix64(seed ^ index)
}

/// Seed for a two-level index such as (feature, repetition).
pub fn derive_seed2(seed: u64, outer: u64, inner: u64) -> u64 {
    derive_seed(derive_seed(seed, outer), inner)
}

pub fn rng_from_seed(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}
