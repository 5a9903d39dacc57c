//! Deterministic derived RNG streams.
//!
//! Every stochastic stage (parameter init, epoch shuffling, per-item noise,
//! per-clip sampling, per-sequence data generation) draws from its own stream
//! derived from `(base seed, domain label, index)`. Streams are independent of
//! batch grouping and of each other, which is what makes runs reproducible and
//! checkpoint resume exact without serializing RNG state.

use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Mixes a base seed, a domain label, and an index into one well-spread seed.
pub fn derive_seed(base: u64, domain: &str, index: u64) -> u64 {
    let mut h = splitmix64(base);
    for &b in domain.as_bytes() {
        h = splitmix64(h ^ u64::from(b));
    }
    splitmix64(h ^ index)
}

/// A ChaCha8 stream for `(base, domain, index)`.
pub fn derive_rng(base: u64, domain: &str, index: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(derive_seed(base, domain, index))
}
