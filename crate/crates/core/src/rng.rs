//! Seed derivation helpers. Every random stream in the crate is addressed by a
//! tuple of integers folded through `mix`, so results never depend on call order.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// SplitMix64 finalizer.
#[inline]
fn finalize(mut z: u64) -> u64 {
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Folds `value` into `state`. Not commutative: `mix(a, b) != mix(b, a)` in general.
#[inline]
pub fn mix(state: u64, value: u64) -> u64 {
    finalize(state.wrapping_add(0x9e37_79b9_7f4a_7c15) ^ finalize(value))
}

pub fn mix_all(seed: u64, values: &[u64]) -> u64 {
    values.iter().fold(seed, |acc, &v| mix(acc, v))
}

pub fn stream(seed: u64, values: &[u64]) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(mix_all(seed, values))
}
