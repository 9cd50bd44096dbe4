//! Keyed RNG streams.
//!
//! A stream is identified by a tuple of integers (seed, cell, replicate,
//! sample, ...). Keys are folded with SplitMix64 into a ChaCha8 seed, so two
//! jobs never share a stream and no stream depends on scheduling.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub type StreamRng = ChaCha8Rng;

/// Stream ids for the different consumers of randomness.
pub mod purpose {
    pub const SAMPLE_ONE: u64 = 1;
    pub const SAMPLE_TWO: u64 = 2;
    pub const SIGNAL_POSITIONS: u64 = 3;
    pub const BAND_SELECTION: u64 = 4;
    pub const BOOTSTRAP: u64 = 5;
    pub const GROUP: u64 = 6;
}

#[inline]
pub fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Folds a key path into a single 64-bit seed.
pub fn derive_seed(keys: &[u64]) -> u64 {
    keys.iter()
        .fold(0x243F_6A88_85A3_08D3_u64, |acc, &k| splitmix64(acc ^ splitmix64(k)))
}

pub fn stream(keys: &[u64]) -> StreamRng {
    ChaCha8Rng::seed_from_u64(derive_seed(keys))
}

/// Stable 64-bit FNV-1a hash, used to turn labels into stream keys.
pub fn hash_str(s: &str) -> u64 {
    s.bytes().fold(0xcbf2_9ce4_8422_2325_u64, |h, b| {
        (h ^ b as u64).wrapping_mul(0x0000_0100_0000_01B3)
    })
}
