//! Deterministic random streams.
//!
//! Every random draw in the crate comes from a [`RngStream`], a `(seed, stream)`
//! pair that maps onto a ChaCha8 keystream. Parallel trials, SGD iterations and
//! individual mechanism calls each get their own substream, so results do not
//! depend on scheduling order.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Generator type handed out by [`RngStream::rng`].
pub type StreamRng = ChaCha8Rng;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct RngStream {
    seed: u64,
    stream: u64,
}

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

impl RngStream {
    pub fn new(seed: u64, stream: u64) -> Self {
        Self { seed, stream }
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn stream(&self) -> u64 {
        self.stream
    }

    /// Child stream identified by `tag`. Distinct tags give distinct keystreams.
    pub fn substream(&self, tag: u64) -> Self {
        Self { seed: self.seed, stream: splitmix64(self.stream ^ splitmix64(tag.wrapping_add(0xD1B5_4A32_D192_ED03))) }
    }

    /// Shorthand for nested substreams, e.g. `(trial, iteration, call)`.
    pub fn path(&self, tags: &[u64]) -> Self {
        tags.iter().fold(*self, |s, &t| s.substream(t))
    }

    pub fn rng(&self) -> StreamRng {
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        rng.set_stream(self.stream);
        rng
    }
}
