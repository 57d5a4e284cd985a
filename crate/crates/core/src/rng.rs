//! Random streams and replica seeding.
//!
//! Every replica owns its own [`Stream`]. Replica `i` of an ensemble with
//! master seed `m` is seeded with
//!
//! ```text
//! seed(m, i) = splitmix64(m ^ splitmix64(i + 0x9E3779B97F4A7C15))
//! ```
//!
//! and expanded to the full generator state by `Xoshiro256PlusPlus::seed_from_u64`.
//! The mapping is pure, so ensembles can be extended with more replicas
//! without changing the existing ones.

use rand::SeedableRng;
use rand_xoshiro::Xoshiro256PlusPlus;

pub type Stream = Xoshiro256PlusPlus;

const GOLDEN: u64 = 0x9E37_79B9_7F4A_7C15;

/// SplitMix64 finalizer.
pub fn splitmix64(x: u64) -> u64 {
    let mut z = x.wrapping_add(GOLDEN);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

pub fn replica_seed(master_seed: u64, replica: u64) -> u64 {
    splitmix64(master_seed ^ splitmix64(replica.wrapping_add(GOLDEN)))
}

pub fn stream(seed: u64) -> Stream {
    Stream::seed_from_u64(seed)
}

pub fn replica_stream(master_seed: u64, replica: u64) -> Stream {
    stream(replica_seed(master_seed, replica))
}
