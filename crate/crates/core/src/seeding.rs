//! Independent RNG streams derived from one master seed.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// What a stream is used for. Each concern draws from its own generator so
/// toggling one (e.g. view noise) leaves the others untouched.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Stream {
    Init,
    Shuffle,
    Noise,
    Centers,
    Points,
    Pairs,
    Rotation,
    Hyperplanes,
}

impl Stream {
    fn tag(self) -> u64 {
        match self {
            Stream::Init => 0x1,
            Stream::Shuffle => 0x2,
            Stream::Noise => 0x3,
            Stream::Centers => 0x4,
            Stream::Points => 0x5,
            Stream::Pairs => 0x6,
            Stream::Rotation => 0x7,
            Stream::Hyperplanes => 0x8,
        }
    }
}

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

pub fn stream_seed(master: u64, stream: Stream) -> u64 {
    splitmix64(master ^ splitmix64(stream.tag()))
}

pub fn stream_rng(master: u64, stream: Stream) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(stream_seed(master, stream))
}
