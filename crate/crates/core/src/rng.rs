//! Seed derivation for replicate streams.
//!
//! Replicate `i` under master seed `m` draws from
//! `ChaCha8Rng::seed_from_u64(mix64(m ^ GOLDEN.wrapping_mul(i)))`, where
//! `mix64` is the SplitMix64 finalizer:
//!
//! ```text
//! z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9
//! z = (z ^ (z >> 27)) * 0x94D049BB133111EB
//! z =  z ^ (z >> 31)
//! ```
//!
//! (all multiplications wrapping mod 2^64). The stream of a replicate
//! depends only on `(m, i)`, never on scheduling.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub type SimRng = ChaCha8Rng;

pub const GOLDEN: u64 = 0x9E37_79B9_7F4A_7C15;

pub fn mix64(mut z: u64) -> u64 {
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

pub fn replicate_seed(master: u64, replicate: u64) -> u64 {
    mix64(master ^ GOLDEN.wrapping_mul(replicate))
}

pub fn replicate_rng(master: u64, replicate: u64) -> SimRng {
    SimRng::seed_from_u64(replicate_seed(master, replicate))
}

pub fn seeded(seed: u64) -> SimRng {
    SimRng::seed_from_u64(seed)
}
