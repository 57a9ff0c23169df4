//! Seed derivation for reproducible, order-independent random streams.
//!
//! Every random draw in the crate comes from a [`ChaCha8Rng`] whose seed is
//! derived from a master seed, a purpose tag and an index. ChaCha is a
//! counter-based generator, so a stream can be re-created in isolation from
//! its `(master, tag, index)` triple without replaying anything else.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Recorded in manifests so results can be tied to the generator family.
pub const RNG_FAMILY: &str = "chacha8/splitmix64-derivation";

/// SplitMix64 finalizer.
#[inline]
pub fn mix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// FNV-1a hash of a purpose tag.
pub fn tag_hash(tag: &str) -> u64 {
    let mut hash = 0xcbf2_9ce4_8422_2325u64;
    for &b in tag.as_bytes() {
        hash ^= u64::from(b);
        hash = hash.wrapping_mul(0x0000_0100_0000_01b3);
    }
    hash
}

/// Derive a child seed from `(master, tag, index)`.
pub fn derive_seed(master: u64, tag: &str, index: u64) -> u64 {
    mix64(master ^ mix64(tag_hash(tag) ^ mix64(index)))
}

/// Hash of a unit identifier under a seed. Used to order units in a way
/// that does not depend on their row position.
#[inline]
pub fn unit_key(seed: u64, unit_id: u64) -> u64 {
    mix64(seed ^ mix64(unit_id.wrapping_mul(0xD134_2543_DE82_EF95)))
}

pub fn stream(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}
