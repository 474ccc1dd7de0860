//! Reproducible random streams.
//!
//! Every unit of parallel work (a replica, a Monte Carlo chunk) owns a
//! ChaCha8 stream keyed by `(root seed, stream index)`: the root seed is
//! expanded into the 256-bit key and the index selects ChaCha's 64-bit
//! stream word. Streams are independent of each other and of how many are
//! requested, so growing a replica count never reshuffles earlier replicas.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub type StreamRng = ChaCha8Rng;

/// Stream purposes, folded into the key so that e.g. replica 0 of a
/// simulation and chunk 0 of a Monte Carlo run never share bits.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Purpose {
    Simulation,
    Haar,
    Trials,
}

impl Purpose {
    fn salt(self) -> u64 {
        match self {
            Purpose::Simulation => 0x5349_4d55_4c41_5445,
            Purpose::Haar => 0x4841_4152_5f55_4e49,
            Purpose::Trials => 0x5452_4941_4c53_5f5f,
        }
    }
}

pub fn stream(seed: u64, purpose: Purpose, index: u64) -> StreamRng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ purpose.salt());
    rng.set_stream(index);
    rng
}
