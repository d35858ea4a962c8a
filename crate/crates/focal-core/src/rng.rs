//! Seed derivation. Every random draw in the crate flows from a user seed
//! through [`rng_for`], so independent pipeline stages (data generation,
//! model init, batch shuffling, baselines) get decorrelated streams and a
//! per-index sub-seed makes parallel generation identical to serial.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Stream ids, one per consumer of randomness. Keeping them in a single
/// place avoids accidental reuse of the same derived seed.
pub mod stream {
    pub const DATA: u64 = 1;
    pub const MODEL_INIT: u64 = 2;
    pub const BATCH: u64 = 3;
    pub const BASELINE: u64 = 4;
    pub const PROBE: u64 = 5;
    pub const TARGET: u64 = 6;
}

/// SplitMix64 finalizer; decorrelates nearby inputs.
fn splitmix(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Derive a sub-seed from `(seed, stream, index)`.
pub fn derive_seed(seed: u64, stream: u64, index: u64) -> u64 {
    splitmix(splitmix(seed ^ splitmix(stream)).wrapping_add(index))
}

/// Seeded generator for one `(stream, index)` slot of a run.
pub fn rng_for(seed: u64, stream: u64, index: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(derive_seed(seed, stream, index))
}
