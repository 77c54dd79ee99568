//! Seeding conventions.
//!
//! Every random draw in the crate comes from [`ChaCha8Rng`] seeded through
//! [`rng_for`]. ChaCha8 output is specified independently of platform and
//! word size, so a seed reproduces the same bits everywhere.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// SplitMix64 finalizer; decorrelates nearby seeds.
pub fn mix(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Derives an independent sub-seed for a named stream.
pub fn derive(seed: u64, stream: &str) -> u64 {
    stream
        .bytes()
        .fold(mix(seed), |acc, b| mix(acc ^ u64::from(b)))
}

pub fn rng_for(seed: u64, stream: &str) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(derive(seed, stream))
}
