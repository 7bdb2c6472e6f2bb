//! Seed derivation and per-trial random streams.
//!
//! Every random quantity in a run is a pure function of the experiment seed
//! and an index (detector id, trial number, setting number), so results do
//! not depend on scheduling or worker count.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// The generator used throughout the crate.
pub type SimRng = ChaCha8Rng;

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Mixes a parent seed with a stream tag into an independent child seed.
pub fn derive_seed(seed: u64, tag: u64) -> u64 {
    splitmix64(splitmix64(seed) ^ splitmix64(tag.wrapping_add(0x5851_f42d_4c95_7f2d)))
}

/// Generator seeded directly from `seed`.
pub fn seeded_rng(seed: u64) -> SimRng {
    SimRng::seed_from_u64(seed)
}

/// Generator for one indexed draw sequence under `seed` (e.g. one trial).
pub fn stream_rng(seed: u64, index: u64) -> SimRng {
    let mut rng = SimRng::seed_from_u64(seed);
    rng.set_stream(index);
    rng
}
