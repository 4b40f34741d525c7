//! Seed derivation.
//!
//! Every random operation takes a `u64` seed and derives independent
//! sub-streams from it with [`derive`]. The derivation is a fixed function
//! of (seed, domain label, index): FNV-1a over the label bytes mixed with
//! splitmix64 finalizers. It is stable across platforms and thread counts,
//! which is what makes parallel replications reproducible.

use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;

const FNV_OFFSET: u64 = 0xcbf2_9ce4_8422_2325;
const FNV_PRIME: u64 = 0x0000_0100_0000_01b3;

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Derive a child seed from `(seed, domain, index)`.
pub fn derive(seed: u64, domain: &str, index: u64) -> u64 {
    let mut h = FNV_OFFSET;
    for &b in domain.as_bytes() {
        h = (h ^ u64::from(b)).wrapping_mul(FNV_PRIME);
    }
    splitmix64(splitmix64(seed ^ h).wrapping_add(index))
}

/// A deterministic RNG seeded from `(seed, domain, index)`.
pub fn rng(seed: u64, domain: &str, index: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(derive(seed, domain, index))
}
