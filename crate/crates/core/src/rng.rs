//! Counter-based random streams.
//!
//! A stream is addressed by `(seed, stream_id)` and backed by ChaCha8, whose
//! 64-bit stream parameter gives independent keystreams for the same key. The
//! draws for a given address never depend on which thread consumes them.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct RngStream {
    pub seed: u64,
    pub stream_id: u64,
}

impl RngStream {
    pub fn new(seed: u64, stream_id: u64) -> Self {
        Self { seed, stream_id }
    }

    /// Fresh generator positioned at the start of this stream.
    pub fn rng(&self) -> ChaCha8Rng {
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        rng.set_stream(self.stream_id);
        rng
    }

    /// Child stream `index` under a key derived from this stream's address.
    ///
    /// Children of distinct parents live under distinct keys, so fan-out can
    /// nest without collisions.
    pub fn child(&self, index: u64) -> RngStream {
        RngStream {
            seed: splitmix64(self.seed ^ splitmix64(self.stream_id.wrapping_add(0x5851_f42d_4c95_7f2d))),
            stream_id: index,
        }
    }

    /// Stream with the same id under a key tagged by `purpose`.
    pub fn derive(&self, purpose: u64) -> RngStream {
        RngStream {
            seed: splitmix64(self.seed.wrapping_add(splitmix64(purpose))),
            stream_id: self.stream_id,
        }
    }
}

pub(crate) fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}
