//! Deterministic random streams.
//!
//! Every replicate draws from its own ChaCha8 stream. The key is derived
//! from the master seed with `SeedableRng::seed_from_u64` and the stream
//! word is the replicate index, so stream `(seed, i)` is a pure function of
//! its two coordinates and workers never coordinate. ChaCha8 exposes 2^64
//! streams of 2^68 bytes each, which is far beyond any run here.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub type StreamRng = ChaCha8Rng;

/// Generator for replicate `stream` under master `seed`.
pub fn stream_rng(seed: u64, stream: u64) -> StreamRng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

/// Derive a sub-seed for an independent experiment component (for example
/// the stationary-cluster reference sample of a decoupling run) so that it
/// never shares streams with the main replicates.
pub fn derive_seed(seed: u64, tag: u64) -> u64 {
    // splitmix64 finalizer
    let mut z = seed ^ tag.wrapping_mul(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}
