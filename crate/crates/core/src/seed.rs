//! Deterministic seed derivation.
//!
//! Every random stream in a run is keyed by the experiment seed plus a purpose
//! tag and integer coordinates (round, client id, ...). Streams never depend on
//! scheduling order.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub type Rng = ChaCha8Rng;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Stream {
    Data,
    Split,
    Partition,
    Ood,
    Init,
    Participation,
    Client,
    Server,
}

impl Stream {
    fn tag(self) -> u64 {
        match self {
            Stream::Data => 0x01,
            Stream::Split => 0x02,
            Stream::Partition => 0x03,
            Stream::Ood => 0x04,
            Stream::Init => 0x05,
            Stream::Participation => 0x06,
            Stream::Client => 0x07,
            Stream::Server => 0x08,
        }
    }
}

#[inline]
fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Mixes a base seed, a stream tag and coordinates into a 64-bit seed.
pub fn derive(base: u64, stream: Stream, coords: &[u64]) -> u64 {
    let mut h = splitmix64(base ^ stream.tag().rotate_left(56));
    for &c in coords {
        h = splitmix64(h ^ c);
    }
    h
}

pub fn rng(base: u64, stream: Stream, coords: &[u64]) -> Rng {
    Rng::seed_from_u64(derive(base, stream, coords))
}

pub fn rng_from(seed: u64) -> Rng {
    Rng::seed_from_u64(seed)
}
