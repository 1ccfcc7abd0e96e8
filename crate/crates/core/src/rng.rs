//! Keyed, counter-based randomness.
//!
//! All stochastic behavior in the crate derives from a 64-bit seed combined
//! with stable keys (record id, stream, position). Nothing depends on thread
//! scheduling, hash-map iteration order, or wall-clock time.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

const FNV_OFFSET: u64 = 0xcbf2_9ce4_8422_2325;
const FNV_PRIME: u64 = 0x0000_0100_0000_01b3;

/// FNV-1a over the UTF-8 bytes of `s`. Stable across platforms and releases.
pub fn hash_str(s: &str) -> u64 {
    s.bytes().fold(FNV_OFFSET, |h, b| {
        (h ^ u64::from(b)).wrapping_mul(FNV_PRIME)
    })
}

pub fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Mixes an ordered list of keys into one 64-bit value.
pub fn mix(keys: &[u64]) -> u64 {
    keys.iter().fold(0x6a09_e667_f3bc_c909, |acc, &k| {
        splitmix64(acc ^ splitmix64(k))
    })
}

/// Uniform draw in [0, 1) addressed by keys.
pub fn uniform(keys: &[u64]) -> f64 {
    (mix(keys) >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
}

/// Uniform integer in `0..n` addressed by keys. `n` must be non-zero.
pub fn below(keys: &[u64], n: u64) -> u64 {
    debug_assert!(n > 0);
    // Multiply-shift avoids the modulo bias of `% n` for small n.
    ((u128::from(mix(keys)) * u128::from(n)) >> 64) as u64
}

/// A stream generator for procedures that draw a variable number of values.
pub fn stream(keys: &[u64]) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(mix(keys))
}
