//! Seed derivation.
//!
//! Every random stream in the crate is a `ChaCha8Rng` seeded from a 64-bit
//! value derived from a master seed and a path of stream labels. Derivation
//! folds each label into the state with the SplitMix64 finalizer, so a stream
//! depends only on `(master, path)` and never on the order in which other
//! streams were consumed.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Stream labels used across the crate. Values are arbitrary but frozen:
/// changing one changes every generated artifact.
pub mod stream {
    pub const LIBRARY: u64 = 0x11;
    pub const SERVER: u64 = 0x21;
    pub const USER: u64 = 0x22;
    pub const WORKLOAD: u64 = 0x31;
    pub const PERTURB: u64 = 0x32;
    pub const FADING: u64 = 0x41;
    pub const MOBILITY: u64 = 0x51;
    pub const ONLINE: u64 = 0x61;
    pub const REPLICATE: u64 = 0x71;
}

#[inline]
fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Derives a sub-seed from `master` and a label path.
pub fn derive_seed(master: u64, path: &[u64]) -> u64 {
    path.iter()
        .fold(splitmix64(master), |acc, &label| splitmix64(acc ^ splitmix64(label)))
}

/// Convenience: an RNG for the stream `(master, path)`.
pub fn rng_for(master: u64, path: &[u64]) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(derive_seed(master, path))
}
