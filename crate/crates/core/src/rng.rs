//! Deterministic random-number substreams.
//!
//! Every replication `i` of an experiment draws from its own ChaCha8 stream,
//! selected by `(master seed, i)`. Results therefore do not depend on how
//! replications are scheduled across workers.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub type SimRng = ChaCha8Rng;

/// A family of independent streams keyed by a 64-bit master seed.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct StreamSeed {
    master: u64,
}

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

impl StreamSeed {
    pub fn new(master: u64) -> Self {
        StreamSeed { master }
    }

    pub fn master(&self) -> u64 {
        self.master
    }

    /// A child family for a labelled sub-experiment (cell, phase, ...).
    pub fn derive(&self, tag: u64) -> StreamSeed {
        StreamSeed {
            master: splitmix64(self.master ^ splitmix64(tag)),
        }
    }

    /// Stream number `index` of this family.
    pub fn stream(&self, index: u64) -> SimRng {
        let mut rng = ChaCha8Rng::seed_from_u64(self.master);
        rng.set_stream(index);
        rng
    }
}
