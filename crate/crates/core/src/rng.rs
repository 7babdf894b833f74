//! Seeded RNG streams. Every random draw in the crate comes from a stream
//! derived here, so results depend only on the seeds in the configuration.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub type Rng = ChaCha8Rng;

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Independent stream for `(seed, path...)`.
pub fn stream(seed: u64, path: &[u64]) -> Rng {
    let mut h = splitmix64(seed);
    for &p in path {
        h = splitmix64(h ^ splitmix64(p));
    }
    Rng::seed_from_u64(h)
}

/// Stream tags, so that two subsystems using the same seed never collide.
pub mod tag {
    pub const WAFER: u64 = 1;
    pub const NOISE: u64 = 2;
    pub const DEFECT: u64 = 3;
    pub const AUGMENT: u64 = 4;
    pub const INIT: u64 = 5;
    pub const SHUFFLE: u64 = 6;
    pub const DROPOUT: u64 = 7;
    pub const SPLIT: u64 = 8;
    pub const BALANCE: u64 = 9;
    pub const FOREST: u64 = 10;
    pub const SMO: u64 = 11;
    pub const CROP: u64 = 12;
    pub const MIX: u64 = 13;
}
