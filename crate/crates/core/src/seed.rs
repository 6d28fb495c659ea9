//! Seed derivation. Every random stream in the toolkit descends from one
//! master seed through a counter, so any component (tree k, trial k, noise
//! draw k) can be reproduced in isolation.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// splitmix64 finalizer over `master` offset by the stream counter.
pub fn derive(master: u64, stream: u64) -> u64 {
    let mut z = master
        .wrapping_add(stream.wrapping_add(1).wrapping_mul(0x9E37_79B9_7F4A_7C15));
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

pub fn rng(master: u64, stream: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(derive(master, stream))
}

/// Named stream tags so unrelated consumers of one master seed never collide.
pub mod streams {
    pub const FOREST: u64 = 0x100;
    pub const BOOSTING: u64 = 0x200;
    pub const SEARCH: u64 = 0x300;
    pub const NOISE: u64 = 0x400;
    pub const SYNTH: u64 = 0x500;
}
