//! Seeded, splittable random streams.
//!
//! Every generator is a ChaCha8 keyed by a 64-bit seed with a 64-bit stream
//! selector. Independent trials draw from disjoint streams derived from a
//! tuple of indices, so serial and parallel runs see identical numbers.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub type StreamRng = ChaCha8Rng;

pub fn stream_rng(seed: u64, stream: u64) -> StreamRng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Folds a key tuple into a stream selector.
pub fn stream_id(key: &[u64]) -> u64 {
    key.iter().fold(0x6a09_e667_f3bc_c909, |acc, &k| {
        splitmix64(acc ^ splitmix64(k))
    })
}

/// Master seed plus a purpose tag; hands out per-trial generators.
#[derive(Debug, Clone, Copy)]
pub struct TrialStreams {
    pub seed: u64,
    pub tag: u64,
}

impl TrialStreams {
    pub fn new(seed: u64, tag: u64) -> Self {
        Self { seed, tag }
    }

    pub fn stream(&self, key: &[u64]) -> u64 {
        let mut full = Vec::with_capacity(key.len() + 1);
        full.push(self.tag);
        full.extend_from_slice(key);
        stream_id(&full)
    }

    pub fn rng(&self, key: &[u64]) -> StreamRng {
        stream_rng(self.seed, self.stream(key))
    }
}
