//! Replica-keyed random streams.
//!
//! Every replica gets its own ChaCha8 generator whose 64-bit seed is
//! `split_seed(experiment_seed, replica)`. The split function is SplitMix64
//! applied to `experiment_seed + GOLDEN * (replica + 1)`, so results depend
//! only on the (seed, replica) pair and never on how replicas are scheduled
//! across worker threads.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

const GOLDEN: u64 = 0x9E37_79B9_7F4A_7C15;

pub type ReplicaRng = ChaCha8Rng;

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(GOLDEN);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Derives the seed of replica `replica` from an experiment seed.
pub fn split_seed(seed: u64, replica: u64) -> u64 {
    splitmix64(seed.wrapping_add(GOLDEN.wrapping_mul(replica.wrapping_add(1))))
}

/// Generator for an already-split seed.
pub fn rng_from_seed(seed: u64) -> ReplicaRng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn replica_rng(seed: u64, replica: u64) -> ReplicaRng {
    rng_from_seed(split_seed(seed, replica))
}
