//! Root-seed expansion.
//!
//! Every random stage draws from its own generator seeded with
//! `splitmix64(root ^ splitmix64(stage_index))`, where `stage_index` is the
//! stage's fixed position in [`Stage`]. Stages can therefore be rerun in
//! isolation with exactly the randomness they see inside the full pipeline.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub type Rng = ChaCha8Rng;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[repr(u64)]
pub enum Stage {
    Synthetic = 1,
    Split = 2,
    Glove = 3,
    KMeans = 4,
    Encoder = 5,
    Classifier = 6,
    Shuffle = 7,
}

pub fn splitmix64(mut x: u64) -> u64 {
    x = x.wrapping_add(0x9E37_79B9_7F4A_7C15);
    x = (x ^ (x >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    x = (x ^ (x >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    x ^ (x >> 31)
}

pub fn sub_seed(root: u64, stage: Stage) -> u64 {
    splitmix64(root ^ splitmix64(stage as u64))
}

pub fn rng_from(seed: u64) -> Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn stage_rng(root: u64, stage: Stage) -> Rng {
    rng_from(sub_seed(root, stage))
}
