//! Splittable, counter-based random streams.
//!
//! Every stochastic stage draws from a [`StreamSeed`], which names one ChaCha
//! stream. Child streams are derived by index, so work split across threads
//! reproduces the same numbers as a sequential run.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

/// The generator every stage uses.
pub type StreamRng = ChaCha8Rng;

/// A (seed, stream) pair identifying one independent random stream.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct StreamSeed {
    pub seed: u64,
    pub stream: u64,
}

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

impl StreamSeed {
    pub fn new(seed: u64) -> Self {
        Self { seed, stream: 0 }
    }

    /// Derive the `index`-th child stream. Children of distinct parents or
    /// distinct indices never share a (seed, stream) pair in practice.
    pub fn split(&self, index: u64) -> Self {
        let seed = splitmix64(self.seed ^ splitmix64(self.stream.wrapping_add(0xA5A5_5A5A)));
        Self {
            seed,
            stream: splitmix64(index ^ self.stream.rotate_left(17)),
        }
    }

    pub fn rng(&self) -> StreamRng {
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        rng.set_stream(self.stream);
        rng
    }

    /// A plain `u64` seed for backends that take a scalar seed.
    pub fn as_u64(&self) -> u64 {
        splitmix64(self.seed ^ self.stream.rotate_left(32))
    }
}
