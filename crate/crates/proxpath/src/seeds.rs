//! Seed streams. Stream `k` of root seed `r` is ChaCha8 keyed by `r` on
//! stream number `k`, so replicate `k` draws the same numbers no matter which
//! worker runs it or in what order.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub fn stream_rng(root: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(root);
    rng.set_stream(stream);
    rng
}

/// Derives a child root seed (for nested stream families).
pub fn child_seed(root: u64, tag: u64) -> u64 {
    // splitmix64 finaliser over the pair
    let mut z = root ^ tag.wrapping_mul(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}
