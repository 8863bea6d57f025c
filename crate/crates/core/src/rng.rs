//! Deterministic random streams.
//!
//! All randomness comes from ChaCha8, a counter-based generator: the
//! 256-bit key is expanded from a 64-bit seed and the 64-bit stream id
//! selects an independent keystream. Stream `i` of seed `s` is
//! `stream_rng(s, i)`; batch element `i` always draws from stream `i`, so a
//! batch and a sequential loop over the same examples consume identical
//! numbers regardless of thread scheduling.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub type StreamRng = ChaCha8Rng;

pub fn stream_rng(seed: u64, stream: u64) -> StreamRng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

/// SplitMix64 finalizer over a pair; derives per-step seeds.
pub fn mix_seed(a: u64, b: u64) -> u64 {
    let mut z = a ^ b.wrapping_mul(0x9E37_79B9_7F4A_7C15).wrapping_add(0x632B_E59B_D9B4_E019);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}
