//! Independent, reproducible random streams.
//!
//! Each draw site gets its own generator keyed by `(seed, stream, round)`, so
//! swapping the learner never shifts the environment's randomness.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Which part of the protocol consumes the stream.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Stream {
    Context,
    Transitions,
    Rewards,
    Policy,
    Generator,
}

impl Stream {
    fn tag(self) -> u64 {
        match self {
            Stream::Context => 0x01,
            Stream::Transitions => 0x02,
            Stream::Rewards => 0x03,
            Stream::Policy => 0x04,
            Stream::Generator => 0x05,
        }
    }
}

fn splitmix64(mut x: u64) -> u64 {
    x = x.wrapping_add(0x9e37_79b9_7f4a_7c15);
    x = (x ^ (x >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    x = (x ^ (x >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    x ^ (x >> 31)
}

/// Generator for `(seed, stream, round)`.
pub fn stream_rng(seed: u64, stream: Stream, round: u64) -> ChaCha8Rng {
    let key = splitmix64(splitmix64(splitmix64(seed) ^ stream.tag()) ^ round);
    ChaCha8Rng::seed_from_u64(key)
}
