//! Seed handling.
//!
//! Every random draw in the crate comes from a [`ChaCha8Rng`] built by
//! [`rng_from`]. Sub-streams (per patient, per fold, per trial) are keyed
//! with [`derive_seed`], a SplitMix64 finalizer over `(seed, tag, index)`.
//! The derivation is part of the reproducibility contract and must not
//! change between releases.

use rand::SeedableRng;
pub use rand_chacha::ChaCha8Rng;

const GOLDEN: u64 = 0x9E37_79B9_7F4A_7C15;

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(GOLDEN);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Stream tags used with [`derive_seed`].
pub mod tag {
    pub const PATIENT: u64 = 1;
    pub const FOLD: u64 = 2;
    pub const TRAIN: u64 = 3;
    pub const INIT: u64 = 4;
    pub const PERMUTE: u64 = 5;
    pub const TUNER: u64 = 6;
    pub const SUBSAMPLE: u64 = 7;
    pub const SPLIT: u64 = 8;
}

pub fn derive_seed(seed: u64, tag: u64, index: u64) -> u64 {
    splitmix64(splitmix64(splitmix64(seed) ^ tag.wrapping_mul(GOLDEN)) ^ index)
}

pub fn rng_from(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn sub_rng(seed: u64, tag: u64, index: u64) -> ChaCha8Rng {
    rng_from(derive_seed(seed, tag, index))
}
