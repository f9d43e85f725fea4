//! Seed derivation. Every run owns one root seed; sub-streams are keyed by a
//! stable identifier so that results do not depend on creation order.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// SplitMix64 finalizer.
pub fn mix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

pub fn derive_seed(root: u64, key: u64) -> u64 {
    mix64(root ^ mix64(key))
}

/// FNV-1a over a string, for turning names into stream keys.
pub fn str_key(s: &str) -> u64 {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for b in s.bytes() {
        h ^= u64::from(b);
        h = h.wrapping_mul(0x0000_0100_0000_01b3);
    }
    h
}

pub fn stream(root: u64, key: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(derive_seed(root, key))
}
