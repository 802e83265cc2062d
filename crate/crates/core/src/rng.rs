//! Reproducible random substreams.
//!
//! Every random task (one bootstrap draw, one simulated data set, ...) gets
//! its own generator derived from `(master seed, tag, index)`, so results do
//! not depend on how tasks are scheduled across threads.

use rand::SeedableRng;
use rand_chacha::ChaCha12Rng;
use serde::{Deserialize, Serialize};

pub const TAG_REPLICATE: u64 = 1;
pub const TAG_STRUCTURE: u64 = 2;
pub const TAG_NOISE: u64 = 3;
pub const TAG_ASYMPTOTIC: u64 = 10;
pub const TAG_BOOTSTRAP: u64 = 11;

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct SeedStream {
    key: u64,
}

impl SeedStream {
    pub fn new(seed: u64) -> Self {
        Self { key: seed }
    }

    pub fn key(&self) -> u64 {
        self.key
    }

    pub fn child(&self, tag: u64, index: u64) -> Self {
        let k = splitmix64(self.key ^ splitmix64(tag.wrapping_mul(0xD1B5_4A32_D192_ED03)));
        Self {
            key: splitmix64(k ^ splitmix64(index.wrapping_add(0x8CB9_2BA7_2F3D_8DD7))),
        }
    }

    pub fn rng(&self) -> ChaCha12Rng {
        let mut seed = [0u8; 32];
        let mut z = self.key;
        for chunk in seed.chunks_mut(8) {
            z = splitmix64(z);
            chunk.copy_from_slice(&z.to_le_bytes());
        }
        ChaCha12Rng::from_seed(seed)
    }
}
