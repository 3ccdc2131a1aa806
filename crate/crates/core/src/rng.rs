//! Seeded random streams.
//!
//! Every stochastic choice draws from its own ChaCha8 stream whose seed is
//! derived from the user seed and a purpose tag with the SplitMix64 finalizer.
//! Turning one feature off (say, subsampling) never shifts another stream.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub type Rng = ChaCha8Rng;

/// Purpose tags for derived streams.
pub mod purpose {
    pub const INIT: u64 = 0x494e_4954;
    pub const WINDOW: u64 = 0x5749_4e44;
    pub const NEGATIVE: u64 = 0x4e45_4741;
    pub const SUBSAMPLE: u64 = 0x5355_4253;
    pub const TSNE_POINT: u64 = 0x5453_4e45;
}

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

pub fn derive_seed(seed: u64, purpose: u64) -> u64 {
    splitmix64(splitmix64(seed) ^ purpose)
}

pub fn stream(seed: u64, purpose: u64) -> Rng {
    Rng::seed_from_u64(derive_seed(seed, purpose))
}
