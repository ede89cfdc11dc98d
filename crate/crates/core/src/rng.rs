//! Keyed random streams.
//!
//! A stream is addressed by `(root_seed, stream_id, key)`; the three words are
//! hashed with the SplitMix64 finalizer into a seed for a fresh
//! Xoshiro256++ generator. Nothing is shared between keys, so the values
//! drawn for a key never depend on which other keys were used, in which
//! order, or on how many workers drew them.

use rand::SeedableRng;
use rand_xoshiro::Xoshiro256PlusPlus;
use serde::{Deserialize, Serialize};

const GOLDEN: u64 = 0x9E37_79B9_7F4A_7C15;

#[inline]
fn splitmix(mut z: u64) -> u64 {
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Root seed plus a stream identifier (e.g. the Monte Carlo sample index).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct RngSeed {
    pub root_seed: u64,
    pub stream_id: u64,
}

pub type StreamRng = Xoshiro256PlusPlus;

impl RngSeed {
    pub fn new(root_seed: u64, stream_id: u64) -> Self {
        Self { root_seed, stream_id }
    }

    /// Same root, different stream.
    pub fn with_stream(self, stream_id: u64) -> Self {
        Self { stream_id, ..self }
    }

    fn mixed(&self, key: u64) -> u64 {
        let h = splitmix(self.root_seed.wrapping_add(GOLDEN));
        let h = splitmix(h ^ self.stream_id.wrapping_mul(GOLDEN).wrapping_add(0x632B_E59B_D9B4_E019));
        splitmix(h ^ key.wrapping_mul(0xD1B5_4A32_D192_ED03).wrapping_add(GOLDEN))
    }

    /// Independent generator for one key within this stream.
    pub fn substream(&self, key: i64) -> StreamRng {
        Xoshiro256PlusPlus::seed_from_u64(self.mixed(key as u64))
    }

    /// Generator for the whole stream (key 0 of a reserved domain).
    pub fn stream(&self) -> StreamRng {
        Xoshiro256PlusPlus::seed_from_u64(self.mixed(u64::MAX) ^ GOLDEN)
    }
}
