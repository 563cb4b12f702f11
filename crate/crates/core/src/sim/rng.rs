//! Seeded random streams.
//!
//! Every stochastic routine takes a single `u64` seed. Independent substreams
//! (one per replication, bootstrap draw or fold shuffle) are ChaCha8
//! generators keyed by `splitmix64(seed ^ splitmix64(index + 1))`, so results
//! depend only on `(seed, index)` and never on scheduling.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub type SimRng = ChaCha8Rng;

/// The splitmix64 finalizer.
pub fn splitmix64(mut x: u64) -> u64 {
    x = x.wrapping_add(0x9E37_79B9_7F4A_7C15);
    x = (x ^ (x >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    x = (x ^ (x >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    x ^ (x >> 31)
}

/// Child seed for substream `index` of `seed`.
pub fn derive_seed(seed: u64, index: u64) -> u64 {
    splitmix64(seed ^ splitmix64(index.wrapping_add(1)))
}

/// Generator for substream `index` of `seed`.
pub fn stream(seed: u64, index: u64) -> SimRng {
    ChaCha8Rng::seed_from_u64(derive_seed(seed, index))
}
