//! Reproducible random streams.
//!
//! Every stochastic component draws from ChaCha8 keyed by a 64-bit seed with
//! an explicit 64-bit stream id, so results do not depend on scheduling and
//! are bit-identical across platforms.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub type StreamRng = ChaCha8Rng;

/// Well-known stream tags, mixed into derived seeds.
pub mod tag {
    pub const INIT: u64 = 0x494e_4954;
    pub const SHUFFLE: u64 = 0x5348_5546;
    pub const WALK: u64 = 0x5741_4c4b;
    pub const NOISE: u64 = 0x4e4f_4953;
    pub const SPLIT: u64 = 0x5350_4c54;
    pub const SYNTH: u64 = 0x5359_4e54;
    pub const PROBE: u64 = 0x5052_4f42;
    pub const MI: u64 = 0x4d49_4d49;
}

pub fn stream_rng(seed: u64, stream: u64) -> StreamRng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

/// SplitMix64 finalizer; used to derive sub-seeds from `(seed, tag, index)`.
pub fn mix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

pub fn derive_seed(seed: u64, tag: u64, index: u64) -> u64 {
    mix64(mix64(seed ^ mix64(tag)) ^ index)
}
