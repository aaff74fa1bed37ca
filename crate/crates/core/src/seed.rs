//! Seed derivation. Every random draw in an experiment descends from one
//! master seed through named sub-streams, so any run can be reproduced from
//! the seed alone.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Named sub-streams of the master seed.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[repr(u64)]
pub enum Stream {
    Model = 1,
    Generation = 2,
    Init = 3,
    Split = 4,
    Population = 5,
    Replication = 6,
}

/// SplitMix64 finalizer.
fn mix(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Derives the seed of item `index` within `stream` of `master`.
pub fn derive(master: u64, stream: Stream, index: u64) -> u64 {
    mix(mix(master ^ mix(stream as u64)).wrapping_add(index))
}

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Generator for replication `r` of an ensemble: same key, distinct ChaCha stream.
pub fn replication_rng(master: u64, r: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(derive(master, Stream::Replication, 0));
    rng.set_stream(r);
    rng
}
