//! Counter-style seed derivation so per-item randomness depends on a stable
//! key (an image path) instead of iteration order.

/// SplitMix64 finalizer.
pub fn mix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

fn fnv1a(bytes: &[u8]) -> u64 {
    bytes.iter().fold(0xcbf2_9ce4_8422_2325, |h, b| {
        (h ^ *b as u64).wrapping_mul(0x0000_0100_0000_01b3)
    })
}

/// Seed for the stream named `key` under the root `seed`.
pub fn derive_seed(seed: u64, key: &str) -> u64 {
    mix64(seed ^ mix64(fnv1a(key.as_bytes())))
}
