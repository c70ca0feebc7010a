//! Seeded random streams.
//!
//! Every stochastic component takes its own `ChaCha8Rng`. Independent work
//! items (simulator calls, calibration trials, restarts) draw from numbered
//! substreams of a base seed so results do not depend on scheduling.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub type Rng = ChaCha8Rng;

pub fn seeded(seed: u64) -> Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Substream `stream` of `seed`. Distinct `(seed, stream)` pairs give
/// independent generators.
pub fn substream(seed: u64, stream: u64) -> Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

/// Derives a child seed from a parent seed and a label; used to give each
/// stage of a pipeline its own reproducible seed.
pub fn derive_seed(seed: u64, label: u64) -> u64 {
    // splitmix64 finalizer over the combined input
    let mut z = seed ^ label.wrapping_mul(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}
