//! Deterministic seed derivation.
//!
//! Every randomized step in the crate owns a seed derived from its parent
//! seed plus a context (a tag string and optional indices). Work items can
//! therefore run in any order and on any number of threads without changing
//! a single output bit. The derivation is SplitMix64 finalization over the
//! parent seed and FNV-1a hashes of the context; streams are consumed by
//! ChaCha8.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Name recorded in run metadata so outputs state which generator produced
/// them.
pub const RNG_ALGORITHM: &str = "chacha8 seeded by splitmix64(parent, fnv1a(tag), indices)";

fn splitmix(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// FNV-1a over the tag bytes; stable across platforms.
pub fn hash_tag(tag: &str) -> u64 {
    let mut h = 0xCBF2_9CE4_8422_2325u64;
    for &b in tag.as_bytes() {
        h ^= u64::from(b);
        h = h.wrapping_mul(0x0000_0100_0000_01B3);
    }
    h
}

/// Derives a child seed from `base` for the stream named by `tag` and
/// `indices`. Distinct contexts give statistically independent streams.
pub fn derive(base: u64, tag: &str, indices: &[u64]) -> u64 {
    let mut state = splitmix(base ^ splitmix(hash_tag(tag)));
    for &ix in indices {
        state = splitmix(state ^ splitmix(ix));
    }
    state
}

pub fn rng_from(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}
