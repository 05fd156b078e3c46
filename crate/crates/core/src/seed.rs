//! Domain-separated seed derivation.
//!
//! Child seeds are a 64-bit mix of `(base, tag, index)`. The mix is a fixed
//! SplitMix64 finalizer chain, so derived streams stay stable across builds and
//! refactors, and distinct tags never share a stream.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub type SimRng = ChaCha8Rng;

#[inline]
fn splitmix(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// FNV-1a over the tag bytes.
fn tag_hash(tag: &str) -> u64 {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for b in tag.bytes() {
        h ^= u64::from(b);
        h = h.wrapping_mul(0x0000_0100_0000_01B3);
    }
    h
}

pub fn derive_seed(base: u64, tag: &str, index: u64) -> u64 {
    let a = splitmix(base);
    let b = splitmix(a ^ tag_hash(tag));
    splitmix(b ^ splitmix(index))
}

pub fn rng_for(base: u64, tag: &str, index: u64) -> SimRng {
    SimRng::seed_from_u64(derive_seed(base, tag, index))
}
