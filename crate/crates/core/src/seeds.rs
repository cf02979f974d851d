//! Stable seed derivation. Every random stream in the simulator is a ChaCha8
//! generator seeded by mixing a master seed with the labels of the entity it
//! belongs to (race id, competitor id, bettor id, session index, ...).
//!
//! The mixer is a fixed splitmix64/FNV combination rather than `DefaultHasher`
//! so derived seeds never change across compiler or std releases; determinism
//! of recorded outputs depends on it.

use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;

const FNV_OFFSET: u64 = 0xcbf2_9ce4_8422_2325;
const FNV_PRIME: u64 = 0x0000_0100_0000_01b3;

fn splitmix64(mut x: u64) -> u64 {
    x = x.wrapping_add(0x9e37_79b9_7f4a_7c15);
    x = (x ^ (x >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    x = (x ^ (x >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    x ^ (x >> 31)
}

/// Accumulates labels into a 64-bit seed.
#[derive(Debug, Clone, Copy)]
pub struct SeedMix(u64);

impl SeedMix {
    pub fn new(master: u64) -> Self {
        SeedMix(splitmix64(master ^ FNV_OFFSET))
    }

    pub fn with_u64(self, v: u64) -> Self {
        SeedMix(splitmix64(self.0 ^ splitmix64(v)))
    }

    pub fn with_str(self, s: &str) -> Self {
        let mut h = FNV_OFFSET;
        for b in s.as_bytes() {
            h = (h ^ *b as u64).wrapping_mul(FNV_PRIME);
        }
        self.with_u64(h)
    }

    pub fn seed(self) -> u64 {
        self.0
    }

    pub fn rng(self) -> ChaCha8Rng {
        ChaCha8Rng::seed_from_u64(self.0)
    }
}

/// Seed for session `index` within a batch under `master`.
pub fn session_seed(master: u64, index: u64) -> u64 {
    SeedMix::new(master).with_str("session").with_u64(index).seed()
}
